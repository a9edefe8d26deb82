#include "rydnet/neuralnet.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "rydnet/datagen.hpp"
#include "rydnet/random.hpp"

namespace rydnet {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "model files assume a little-endian host");

MlpArchitecture MlpArchitecture::standard(int inputs, int outputs)
{
    return {{inputs, 1024, 512, 256, outputs}};
}

void MlpArchitecture::validate() const
{
    if (widths.size() < 2)
        throw TrainingError("an MLP needs at least an input and an output layer");
    for (int w : widths)
        if (w < 1)
            throw TrainingError("layer widths must be positive");
}

Mlp Mlp::zeros(const MlpArchitecture& arch)
{
    arch.validate();
    Mlp net;
    net.arch = arch;
    for (std::size_t l = 0; l < arch.layers(); ++l) {
        net.W.push_back(Eigen::MatrixXd::Zero(arch.widths[l + 1], arch.widths[l]));
        net.b.push_back(Eigen::VectorXd::Zero(arch.widths[l + 1]));
    }
    return net;
}

Mlp Mlp::init(const MlpArchitecture& arch, std::uint64_t seed)
{
    Mlp net = zeros(arch);
    Rng rng(seed);
    for (auto& W : net.W) {
        const double bound = std::sqrt(6.0 / static_cast<double>(W.cols()));
        // Row-major fill so the draw order does not depend on storage order.
        for (Eigen::Index r = 0; r < W.rows(); ++r)
            for (Eigen::Index c = 0; c < W.cols(); ++c)
                W(r, c) = rng.uniform(-bound, bound);
    }
    return net;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& X) const
{
    if (X.rows() != arch.widths.front())
        throw TrainingError("input width " + std::to_string(X.rows()) + " does not match the network (" +
                            std::to_string(arch.widths.front()) + ")");
    if (!X.allFinite())
        throw TrainingError("non-finite network input");
    Eigen::MatrixXd a = X;
    for (std::size_t l = 0; l < W.size(); ++l) {
        Eigen::MatrixXd z = W[l] * a;
        z.colwise() += b[l];
        a = l + 1 < W.size() ? Eigen::MatrixXd(z.cwiseMax(0.0)) : z;
    }
    if (!a.allFinite())
        throw TrainingError("non-finite network output");
    return a;
}

Eigen::VectorXd Mlp::forward(const Eigen::VectorXd& x) const
{
    return forward(Eigen::MatrixXd(x)).col(0);
}

std::size_t Mlp::parameter_count() const
{
    std::size_t n = 0;
    for (std::size_t l = 0; l < W.size(); ++l)
        n += static_cast<std::size_t>(W[l].size() + b[l].size());
    return n;
}

double loss_and_gradients(const Mlp& net, const Eigen::MatrixXd& X, const Eigen::MatrixXd& T, Gradients& grads)
{
    const std::size_t L = net.W.size();
    if (X.cols() == 0)
        throw TrainingError("empty batch");
    if (T.cols() != X.cols() || T.rows() != net.arch.widths.back())
        throw TrainingError("target block does not match the network output");

    std::vector<Eigen::MatrixXd> acts(L + 1);
    acts[0] = X;
    for (std::size_t l = 0; l < L; ++l) {
        Eigen::MatrixXd z = net.W[l] * acts[l];
        z.colwise() += net.b[l];
        acts[l + 1] = l + 1 < L ? Eigen::MatrixXd(z.cwiseMax(0.0)) : z;
    }
    const Eigen::MatrixXd resid = acts[L] - T;
    const double count = static_cast<double>(resid.size());
    const double loss = resid.squaredNorm() / count;

    grads.dW.resize(L);
    grads.db.resize(L);
    Eigen::MatrixXd delta = (2.0 / count) * resid;
    for (std::size_t l = L; l-- > 0;) {
        grads.dW[l].noalias() = delta * acts[l].transpose();
        grads.db[l] = delta.rowwise().sum();
        if (l > 0) {
            Eigen::MatrixXd back = net.W[l].transpose() * delta;
            // ReLU derivative, taken as 0 at the kink.
            delta = (acts[l].array() > 0.0).select(back, 0.0);
        }
    }
    return loss;
}

double mse(const Mlp& net, const Eigen::MatrixXd& X, const Eigen::MatrixXd& T)
{
    const Eigen::MatrixXd y = net.forward(X);
    if (y.rows() != T.rows() || y.cols() != T.cols())
        throw TrainingError("target block does not match the network output");
    return (y - T).squaredNorm() / static_cast<double>(T.size());
}

void AdamParams::validate() const
{
    if (!(lr > 0.0))
        throw TrainingError("learning rate must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
        throw TrainingError("Adam betas must lie in [0, 1)");
    if (!(eps > 0.0))
        throw TrainingError("Adam epsilon must be positive");
}

AdamState AdamState::for_net(const Mlp& net)
{
    AdamState s;
    for (std::size_t l = 0; l < net.W.size(); ++l) {
        s.mW.push_back(Eigen::MatrixXd::Zero(net.W[l].rows(), net.W[l].cols()));
        s.vW.push_back(Eigen::MatrixXd::Zero(net.W[l].rows(), net.W[l].cols()));
        s.mb.push_back(Eigen::VectorXd::Zero(net.b[l].size()));
        s.vb.push_back(Eigen::VectorXd::Zero(net.b[l].size()));
    }
    return s;
}

namespace {

template <class P>
void adam_update(P& param, P& m, P& v, const P& g, const AdamParams& a, double c1, double c2)
{
    m = a.beta1 * m + (1.0 - a.beta1) * g;
    v = a.beta2 * v + (1.0 - a.beta2) * g.cwiseProduct(g);
    param.array() -= a.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + a.eps);
}

} // namespace

void adam_step(Mlp& net, AdamState& state, const Gradients& grads, const AdamParams& params)
{
    ++state.t;
    const double c1 = 1.0 - std::pow(params.beta1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(params.beta2, static_cast<double>(state.t));
    for (std::size_t l = 0; l < net.W.size(); ++l) {
        adam_update(net.W[l], state.mW[l], state.vW[l], grads.dW[l], params, c1, c2);
        adam_update(net.b[l], state.mb[l], state.vb[l], grads.db[l], params, c1, c2);
    }
}

std::string to_string(RegressionTask task)
{
    return task == RegressionTask::positions ? "positions" : "operators";
}

RegressionTask regression_task_from_string(const std::string& s)
{
    if (s == "positions")
        return RegressionTask::positions;
    if (s == "operators")
        return RegressionTask::operators;
    throw TrainingError("unknown regression task '" + s + "'");
}

TargetCodec TargetCodec::positions(int M, double L)
{
    if (M < 1 || !(L > 0.0))
        throw TrainingError("position codec needs M >= 1 and L > 0");
    TargetCodec c;
    c.task = RegressionTask::positions;
    c.M = M;
    c.L = L;
    return c;
}

namespace {

Eigen::VectorXd raw_operators(const Eigen::VectorXd& h, const Eigen::VectorXcd& l)
{
    const auto n = h.size();
    Eigen::VectorXd v(3 * n);
    v.head(n) = h;
    v.segment(n, n) = l.real();
    v.tail(n) = l.imag();
    return v;
}

} // namespace

TargetCodec TargetCodec::operators(const std::vector<FeatureRecord>& train)
{
    if (train.empty())
        throw TrainingError("operator codec needs training records");
    TargetCodec c;
    c.task = RegressionTask::operators;
    c.M = train.front().M;
    c.L = train.front().L;
    const auto K = static_cast<Eigen::Index>(3 * train.front().sites());
    Eigen::MatrixXd V(K, static_cast<Eigen::Index>(train.size()));
    for (std::size_t r = 0; r < train.size(); ++r) {
        if (train[r].M != c.M)
            throw TrainingError("operator codec: records mix different M");
        V.col(static_cast<Eigen::Index>(r)) = raw_operators(train[r].h_prime, train[r].l);
    }
    const double n = static_cast<double>(train.size());
    c.mean = V.rowwise().sum() / n;
    c.scale.resize(K);
    for (Eigen::Index k = 0; k < K; ++k) {
        const double sd = std::sqrt((V.row(k).array() - c.mean[k]).square().sum() / n);
        c.scale[k] = sd < 1e-12 ? 1.0 : sd;
    }
    return c;
}

int TargetCodec::outputs() const
{
    return task == RegressionTask::positions ? 2 * M : 3 * (M + 3);
}

Eigen::VectorXd TargetCodec::encode_positions(const std::vector<Vec2>& p) const
{
    if (p.size() != static_cast<std::size_t>(M))
        throw TrainingError("expected " + std::to_string(M) + " positions");
    Eigen::VectorXd y(2 * M);
    for (std::size_t i = 0; i < p.size(); ++i) {
        y[static_cast<Eigen::Index>(2 * i)] = p[i].x / L + 0.5;
        y[static_cast<Eigen::Index>(2 * i + 1)] = p[i].y / L + 0.5;
    }
    return y;
}

Eigen::VectorXd TargetCodec::encode_operators(const Eigen::VectorXd& h_prime, const Eigen::VectorXcd& l) const
{
    if (h_prime.size() != M + 3 || l.size() != M + 3)
        throw TrainingError("expected N = M + 3 operator entries");
    return (raw_operators(h_prime, l) - mean).cwiseQuotient(scale);
}

Eigen::VectorXd TargetCodec::encode(const FeatureRecord& r) const
{
    if (r.M != M)
        throw TrainingError("record with M=" + std::to_string(r.M) + " given to an M=" + std::to_string(M) + " codec");
    return task == RegressionTask::positions ? encode_positions(r.box_positions) : encode_operators(r.h_prime, r.l);
}

std::vector<Vec2> TargetCodec::decode_positions(const Eigen::VectorXd& y) const
{
    if (task != RegressionTask::positions)
        throw TrainingError("codec does not hold positions");
    if (y.size() != 2 * M)
        throw TrainingError("position output has the wrong width");
    std::vector<Vec2> p(static_cast<std::size_t>(M));
    for (std::size_t i = 0; i < p.size(); ++i)
        p[i] = {(y[static_cast<Eigen::Index>(2 * i)] - 0.5) * L, (y[static_cast<Eigen::Index>(2 * i + 1)] - 0.5) * L};
    return p;
}

OperatorEstimate TargetCodec::decode_operators(const Eigen::VectorXd& y) const
{
    if (task != RegressionTask::operators)
        throw TrainingError("codec does not hold operators");
    const Eigen::Index n = M + 3;
    if (y.size() != 3 * n)
        throw TrainingError("operator output has the wrong width");
    const Eigen::VectorXd v = y.cwiseProduct(scale) + mean;
    OperatorEstimate e;
    e.h_prime = v.head(n);
    e.l.resize(n);
    for (Eigen::Index i = 0; i < n; ++i)
        e.l[i] = {v[n + i], v[2 * n + i]};
    return e;
}

void to_json(json& j, const TargetCodec& c)
{
    j = json{{"task", to_string(c.task)}, {"M", c.M}, {"L", c.L},
             {"mean", std::vector<double>(c.mean.data(), c.mean.data() + c.mean.size())},
             {"scale", std::vector<double>(c.scale.data(), c.scale.data() + c.scale.size())}};
}

void from_json(const json& j, TargetCodec& c)
{
    c.task = regression_task_from_string(j.at("task").get<std::string>());
    c.M = j.at("M").get<int>();
    c.L = j.at("L").get<double>();
    const auto mean = j.at("mean").get<std::vector<double>>();
    const auto scale = j.at("scale").get<std::vector<double>>();
    c.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
    c.scale = Eigen::Map<const Eigen::VectorXd>(scale.data(), static_cast<Eigen::Index>(scale.size()));
}

void TrainingConfig::validate() const
{
    adam.validate();
    if (epochs < 1 || batch_size < 1 || patience < 1)
        throw TrainingError("epochs, batch size and patience must be positive");
    if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
        throw TrainingError("validation fraction must lie in [0, 1)");
}

Eigen::VectorXd TrainedRegressor::predict_encoded(const Eigen::VectorXd& inputs) const
{
    return net.forward(input_stats.apply(inputs));
}

std::vector<Vec2> TrainedRegressor::predict_positions(const Eigen::VectorXd& inputs) const
{
    return codec.decode_positions(predict_encoded(inputs));
}

OperatorEstimate TrainedRegressor::predict_operators(const Eigen::VectorXd& inputs) const
{
    return codec.decode_operators(predict_encoded(inputs));
}

namespace {

constexpr char kMagic[8] = {'R', 'Y', 'D', 'M', 'L', 'P', '0', '1'};

json config_to_json(const TrainingConfig& c)
{
    return json{{"epochs", c.epochs}, {"batch_size", c.batch_size}, {"validation_fraction", c.validation_fraction},
                {"patience", c.patience}, {"lr", c.adam.lr}, {"beta1", c.adam.beta1}, {"beta2", c.adam.beta2},
                {"eps", c.adam.eps}, {"seed", c.seed}};
}

TrainingConfig config_from_json(const json& j)
{
    TrainingConfig c;
    c.epochs = j.at("epochs").get<int>();
    c.batch_size = j.at("batch_size").get<int>();
    c.validation_fraction = j.at("validation_fraction").get<double>();
    c.patience = j.at("patience").get<int>();
    c.adam = {j.at("lr").get<double>(), j.at("beta1").get<double>(), j.at("beta2").get<double>(), j.at("eps").get<double>()};
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

void write_block(std::ofstream& out, const double* data, Eigen::Index n)
{
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
}

void read_block(std::ifstream& in, double* data, Eigen::Index n, const std::string& where)
{
    in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
    if (!in)
        throw TrainingError(where + ": truncated weight block");
}

} // namespace

void TrainedRegressor::save(const std::filesystem::path& path) const
{
    const json header{{"format", "rydnet-mlp"},
                      {"widths", net.arch.widths},
                      {"hidden_activation", "relu"},
                      {"output_activation", "identity"},
                      {"codec", codec},
                      {"input_stats", input_stats},
                      {"appends_positions", appends_positions},
                      {"config", config_to_json(config)},
                      {"history",
                       {{"train_loss", history.train_loss},
                        {"validation_loss", history.validation_loss},
                        {"initial_validation_loss", history.initial_validation_loss},
                        {"best_epoch", history.best_epoch},
                        {"stopped_early", history.stopped_early}}}};
    const std::string text = header.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw TrainingError("cannot write " + path.string());
    out.write(kMagic, sizeof kMagic);
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (std::size_t l = 0; l < net.W.size(); ++l) {
        write_block(out, net.W[l].data(), net.W[l].size());
        write_block(out, net.b[l].data(), net.b[l].size());
    }
    if (!out)
        throw TrainingError("failed writing " + path.string());
}

TrainedRegressor TrainedRegressor::load(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw TrainingError("cannot read " + path.string());
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
        throw TrainingError(path.string() + ": not an MLP model file");
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof len);
    if (!in || len > (1u << 30))
        throw TrainingError(path.string() + ": corrupt header length");
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    if (!in)
        throw TrainingError(path.string() + ": truncated header");

    TrainedRegressor m;
    try {
        const json h = json::parse(text);
        MlpArchitecture arch{h.at("widths").get<std::vector<int>>()};
        m.net = Mlp::zeros(arch);
        m.codec = h.at("codec").get<TargetCodec>();
        m.input_stats = h.at("input_stats").get<StandardizationStats>();
        m.appends_positions = h.at("appends_positions").get<bool>();
        m.config = config_from_json(h.at("config"));
        const auto& hist = h.at("history");
        m.history.train_loss = hist.at("train_loss").get<std::vector<double>>();
        m.history.validation_loss = hist.at("validation_loss").get<std::vector<double>>();
        m.history.initial_validation_loss = hist.at("initial_validation_loss").get<double>();
        m.history.best_epoch = hist.at("best_epoch").get<int>();
        m.history.stopped_early = hist.at("stopped_early").get<bool>();
    } catch (const json::exception& e) {
        throw TrainingError(path.string() + ": bad header: " + e.what());
    }
    for (std::size_t l = 0; l < m.net.W.size(); ++l) {
        read_block(in, m.net.W[l].data(), m.net.W[l].size(), path.string());
        read_block(in, m.net.b[l].data(), m.net.b[l].size(), path.string());
    }
    if (m.codec.outputs() != m.net.arch.widths.back())
        throw TrainingError(path.string() + ": codec and output layer disagree");
    return m;
}

Eigen::VectorXd regression_inputs(const FeatureRecord& r, bool append_positions)
{
    const auto nf = static_cast<Eigen::Index>(r.features.size());
    Eigen::VectorXd x(nf + (append_positions ? 2 * r.M : 0));
    x.head(nf) = Eigen::Map<const Eigen::VectorXd>(r.features.data(), nf);
    if (append_positions)
        x.tail(2 * r.M) = TargetCodec::positions(r.M, r.L).encode_positions(r.box_positions);
    return x;
}

Eigen::MatrixXd regression_inputs(const std::vector<FeatureRecord>& records, bool append_positions)
{
    if (records.empty())
        return {};
    const Eigen::VectorXd first = regression_inputs(records.front(), append_positions);
    Eigen::MatrixXd X(static_cast<Eigen::Index>(records.size()), first.size());
    X.row(0) = first.transpose();
    for (std::size_t r = 1; r < records.size(); ++r) {
        const Eigen::VectorXd x = regression_inputs(records[r], append_positions);
        if (x.size() != first.size())
            throw TrainingError("records produce inputs of different widths");
        X.row(static_cast<Eigen::Index>(r)) = x.transpose();
    }
    return X;
}

namespace {

Eigen::MatrixXd gather_columns(const Eigen::MatrixXd& src, const std::vector<std::size_t>& idx, std::size_t from,
                               std::size_t count)
{
    Eigen::MatrixXd out(src.rows(), static_cast<Eigen::Index>(count));
    for (std::size_t i = 0; i < count; ++i)
        out.col(static_cast<Eigen::Index>(i)) = src.col(static_cast<Eigen::Index>(idx[from + i]));
    return out;
}

void shuffle(std::vector<std::size_t>& v, Rng& rng)
{
    for (std::size_t i = v.size(); i > 1; --i)
        std::swap(v[i - 1], v[rng.index(i)]);
}

} // namespace

TrainedRegressor train_regressor(const Eigen::MatrixXd& X, const Eigen::MatrixXd& T, const TargetCodec& codec,
                                 const MlpArchitecture& arch, const TrainingConfig& config,
                                 const std::function<void(int, double, double)>& on_epoch)
{
    config.validate();
    arch.validate();
    const auto n = static_cast<std::size_t>(X.rows());
    if (n == 0)
        throw TrainingError("no training records");
    if (static_cast<std::size_t>(T.rows()) != n)
        throw TrainingError("inputs and targets differ in record count");
    if (X.cols() != arch.widths.front() || T.cols() != arch.widths.back())
        throw TrainingError("architecture does not match the input/target widths");

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i)
        order[i] = i;
    Rng split_rng(derive_seed(config.seed, 1));
    shuffle(order, split_rng);
    std::size_t n_val = static_cast<std::size_t>(std::llround(config.validation_fraction * static_cast<double>(n)));
    if (config.validation_fraction > 0.0 && n >= 2)
        n_val = std::clamp<std::size_t>(n_val, 1, n - 1);
    else
        n_val = 0;
    const std::size_t n_train = n - n_val;
    std::vector<std::size_t> train_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::vector<std::size_t> val_idx(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());

    TrainedRegressor model;
    model.codec = codec;
    model.config = config;
    Eigen::MatrixXd Xtrain_rows(static_cast<Eigen::Index>(n_train), X.cols());
    for (std::size_t i = 0; i < n_train; ++i)
        Xtrain_rows.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(train_idx[i]));
    model.input_stats = StandardizationStats::fit(Xtrain_rows);

    // Column-per-sample copies, standardized once.
    const Eigen::MatrixXd Xs = model.input_stats.apply(X).transpose();
    const Eigen::MatrixXd Ts = T.transpose();
    std::vector<std::size_t> all_val = val_idx.empty() ? train_idx : val_idx;
    const Eigen::MatrixXd Xv = gather_columns(Xs, all_val, 0, all_val.size());
    const Eigen::MatrixXd Tv = gather_columns(Ts, all_val, 0, all_val.size());

    Mlp net = Mlp::init(arch, derive_seed(config.seed, 2));
    AdamState adam = AdamState::for_net(net);
    Gradients grads;
    Rng batch_rng(derive_seed(config.seed, 3));

    double best = mse(net, Xv, Tv);
    model.history.initial_validation_loss = best;
    Mlp best_net = net;
    int since_best = 0;
    const auto bs = static_cast<std::size_t>(config.batch_size);

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        shuffle(train_idx, batch_rng);
        double sum = 0.0;
        for (std::size_t from = 0; from < n_train; from += bs) {
            const std::size_t count = std::min(bs, n_train - from);
            const Eigen::MatrixXd xb = gather_columns(Xs, train_idx, from, count);
            const Eigen::MatrixXd tb = gather_columns(Ts, train_idx, from, count);
            const double loss = loss_and_gradients(net, xb, tb, grads);
            if (!std::isfinite(loss))
                throw TrainingError("training diverged: non-finite loss in epoch " + std::to_string(epoch));
            sum += loss * static_cast<double>(count);
            adam_step(net, adam, grads, config.adam);
        }
        const double train_loss = sum / static_cast<double>(n_train);
        double val_loss = 0.0;
        try {
            val_loss = mse(net, Xv, Tv);
        } catch (const TrainingError&) {
            throw TrainingError("training diverged: non-finite validation output in epoch " + std::to_string(epoch));
        }
        if (!std::isfinite(val_loss))
            throw TrainingError("training diverged: non-finite validation loss in epoch " + std::to_string(epoch));
        model.history.train_loss.push_back(train_loss);
        model.history.validation_loss.push_back(val_loss);
        if (on_epoch)
            on_epoch(epoch, train_loss, val_loss);
        if (val_loss < best) {
            best = val_loss;
            best_net = net;
            model.history.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= config.patience) {
            model.history.stopped_early = true;
            break;
        }
    }
    model.net = std::move(best_net);
    return model;
}

} // namespace rydnet
