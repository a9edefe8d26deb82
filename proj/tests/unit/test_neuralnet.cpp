#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "rydnet/datagen.hpp"
#include "rydnet/neuralnet.hpp"
#include "rydnet/random.hpp"

using namespace rydnet;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0)
{
    Eigen::MatrixXd m(r, c);
    for (auto& v : m.reshaped())
        v = rng.uniform(-scale, scale);
    return m;
}

} // namespace

TEST_SUITE("neuralnet")
{
    TEST_CASE("standard architecture")
    {
        const auto a = MlpArchitecture::standard(400, 4);
        CHECK(a.widths == std::vector<int>{400, 1024, 512, 256, 4});
        CHECK(a.layers() == 4);
        CHECK_THROWS_AS((MlpArchitecture{{4, 0, 2}}.validate()), std::exception);
        CHECK_THROWS_AS((MlpArchitecture{{4}}.validate()), std::exception);
    }

    TEST_CASE("forward pass matches hand evaluation")
    {
        Rng rng(2);
        Mlp net = Mlp::init({{4, 3, 2}}, 9);
        net.b[0] = random_matrix(3, 1, rng);
        net.b[1] = random_matrix(2, 1, rng);
        const Eigen::VectorXd x = random_matrix(4, 1, rng);
        double hidden[3];
        for (int i = 0; i < 3; ++i) {
            double s = net.b[0][i];
            for (int j = 0; j < 4; ++j)
                s += net.W[0](i, j) * x[j];
            hidden[i] = s > 0 ? s : 0;
        }
        const Eigen::VectorXd y = net.forward(x);
        for (int i = 0; i < 2; ++i) {
            double s = net.b[1][i];
            for (int j = 0; j < 3; ++j)
                s += net.W[1](i, j) * hidden[j];
            CHECK(y[i] == doctest::Approx(s).epsilon(1e-14));
        }
        CHECK(net.parameter_count() == 4 * 3 + 3 + 3 * 2 + 2);
    }

    TEST_CASE("initialisation bounds and determinism")
    {
        const auto a = Mlp::init({{50, 20, 3}}, 4);
        const auto b = Mlp::init({{50, 20, 3}}, 4);
        CHECK(a.W[0] == b.W[0]);
        CHECK(a.W[0].cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 50));
        CHECK(a.W[1].cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 20));
        CHECK(a.b[0].cwiseAbs().maxCoeff() == 0.0);
        CHECK(Mlp::init({{50, 20, 3}}, 5).W[0] != a.W[0]);
    }

    TEST_CASE("non-finite inputs are refused")
    {
        const auto net = Mlp::init({{3, 4, 1}}, 1);
        Eigen::VectorXd x(3);
        x << 1, std::nan(""), 0;
        CHECK_THROWS_AS(net.forward(x), TrainingError);
    }

    TEST_CASE("gradients match central differences")
    {
        Rng rng(13);
        Mlp net = Mlp::init({{400, 8, 4, 2}}, 3);
        for (auto& b : net.b)
            b = random_matrix(b.size(), 1, rng, 0.3);
        const Eigen::MatrixXd X = random_matrix(400, 6, rng);
        const Eigen::MatrixXd T = random_matrix(2, 6, rng);
        Gradients g;
        loss_and_gradients(net, X, T, g);
        const double h = 1e-6;
        auto check = [&](double& param, double analytic) {
            const double keep = param;
            param = keep + h;
            const double up = mse(net, X, T);
            param = keep - h;
            const double down = mse(net, X, T);
            param = keep;
            const double fd = (up - down) / (2 * h);
            const double scale = std::max({std::abs(fd), std::abs(analytic), 1e-6});
            return std::abs(fd - analytic) / scale;
        };
        double worst = 0.0;
        for (std::size_t l = 0; l < net.W.size(); ++l) {
            // every weight of the small layers, a strided sample of the 400-wide one
            const Eigen::Index stride = l == 0 ? 7 : 1;
            for (Eigen::Index k = 0; k < net.W[l].size(); k += stride)
                worst = std::max(worst, check(net.W[l].data()[k], g.dW[l].data()[k]));
            for (Eigen::Index k = 0; k < net.b[l].size(); ++k)
                worst = std::max(worst, check(net.b[l][k], g.db[l][k]));
        }
        CHECK(worst <= 1e-4);
    }

    TEST_CASE("first adam step")
    {
        Mlp net = Mlp::zeros({{1, 1}});
        net.W[0](0, 0) = 0.5;
        auto state = AdamState::for_net(net);
        Gradients g{{Eigen::MatrixXd::Constant(1, 1, 1.0)}, {Eigen::VectorXd::Constant(1, 1.0)}};
        AdamParams p;
        adam_step(net, state, g, p);
        CHECK(state.t == 1);
        CHECK(net.W[0](0, 0) == doctest::Approx(0.5 - p.lr / (1.0 + p.eps)).epsilon(1e-15));
        CHECK(net.b[0][0] == doctest::Approx(-p.lr / (1.0 + p.eps)).epsilon(1e-15));
        CHECK_THROWS((AdamParams{0.0, 0.9, 0.999, 1e-8}.validate()));
        CHECK_THROWS((AdamParams{1e-3, 1.0, 0.999, 1e-8}.validate()));
    }

    TEST_CASE("a linear task is learned")
    {
        Rng rng(44);
        // No hidden layer: the least-squares fit is exact, so the trainer must reach it.
        const Eigen::MatrixXd A = random_matrix(2, 10, rng, 0.3);
        const Eigen::MatrixXd X = random_matrix(50, 10, rng);
        const Eigen::MatrixXd T = X * A.transpose();
        TrainingConfig cfg;
        cfg.epochs = 200;
        cfg.batch_size = 5;
        cfg.patience = 200;
        cfg.adam.lr = 1e-2;
        cfg.seed = 8;
        const auto model = train_regressor(X, T, TargetCodec::positions(1, 10.0), {{10, 2}}, cfg);
        const auto& v = model.history.validation_loss;
        CHECK(*std::min_element(v.begin(), v.end()) < 1e-3);
        const Eigen::VectorXd fresh = random_matrix(10, 1, rng);
        CHECK((model.predict_encoded(fresh) - A * fresh).cwiseAbs().maxCoeff() < 1e-2);
        CHECK(model.history.best_epoch >= 0);
        CHECK(v[static_cast<std::size_t>(model.history.best_epoch)] <= model.history.initial_validation_loss);
    }

    TEST_CASE("training is deterministic and stops early")
    {
        Rng rng(45);
        const Eigen::MatrixXd X = random_matrix(40, 6, rng);
        const Eigen::MatrixXd T = random_matrix(40, 2, rng);   // pure noise: validation stalls
        TrainingConfig cfg;
        cfg.epochs = 400;
        cfg.batch_size = 8;
        cfg.patience = 5;
        cfg.seed = 1;
        const auto a = train_regressor(X, T, TargetCodec::positions(1, 10.0), {{6, 16, 2}}, cfg);
        const auto b = train_regressor(X, T, TargetCodec::positions(1, 10.0), {{6, 16, 2}}, cfg);
        CHECK(a.history.stopped_early);
        CHECK(a.history.validation_loss.size() < 400);
        CHECK(a.history.validation_loss == b.history.validation_loss);
        CHECK(a.net.W[0] == b.net.W[0]);
    }

    TEST_CASE("position codec round trip")
    {
        const auto codec = TargetCodec::positions(3, 15.0);
        CHECK(codec.outputs() == 6);
        const std::vector<Vec2> p{{-7.5, 7.5}, {0.3, -2.0}, {6.1, 1.0}};
        const auto y = codec.encode_positions(p);
        CHECK(y[0] == 0.0);
        CHECK(y[1] == 1.0);
        const auto back = codec.decode_positions(y);
        for (std::size_t k = 0; k < p.size(); ++k) {
            CHECK(back[k].x == doctest::Approx(p[k].x).epsilon(1e-12));
            CHECK(back[k].y == doctest::Approx(p[k].y).epsilon(1e-12));
        }
    }

    TEST_CASE("operator codec round trip")
    {
        GenerationSettings s;
        s.decoherence = DecoherenceSpec::realistic(6.0, 80.0);
        std::vector<FeatureRecord> recs;
        for (std::uint64_t k = 0; k < 3; ++k)
            recs.push_back(generate_record(2, s, k));
        const auto codec = TargetCodec::operators(recs);
        CHECK(codec.outputs() == 15);
        // output sites never vary, so their scale stays 1
        CHECK(codec.scale[3] == 1.0);
        CHECK(codec.scale[4] == 1.0);
        const auto est = codec.decode_operators(codec.encode(recs[1]));
        CHECK((est.h_prime - recs[1].h_prime).cwiseAbs().maxCoeff() <= 1e-12 * recs[1].h_prime.cwiseAbs().maxCoeff());
        CHECK((est.l - recs[1].l).cwiseAbs().maxCoeff() <= 1e-12 * recs[1].l.cwiseAbs().maxCoeff());
        const auto mixed = std::vector<FeatureRecord>{recs[0], generate_record(3, s, 9)};
        CHECK_THROWS(TargetCodec::operators(mixed));
    }

    TEST_CASE("model files round trip")
    {
        Rng rng(46);
        const Eigen::MatrixXd X = random_matrix(30, 5, rng);
        const Eigen::MatrixXd T = random_matrix(30, 4, rng, 0.5).array() + 0.5;
        TrainingConfig cfg;
        cfg.epochs = 5;
        cfg.batch_size = 8;
        const auto model = train_regressor(X, T, TargetCodec::positions(2, 10.0), {{5, 7, 4}}, cfg);
        const auto path = std::filesystem::temp_directory_path() / "rydnet_unit_mlp.bin";
        model.save(path);
        {
            std::ifstream in(path, std::ios::binary);
            char magic[8];
            in.read(magic, 8);
            CHECK(std::string(magic, 8) == "RYDMLP01");
        }
        const auto back = TrainedRegressor::load(path);
        for (Eigen::Index r = 0; r < X.rows(); ++r) {
            const Eigen::VectorXd x = X.row(r).transpose();
            CHECK(back.predict_encoded(x) == model.predict_encoded(x));
        }
        CHECK(back.history.validation_loss == model.history.validation_loss);
        const auto again = std::filesystem::temp_directory_path() / "rydnet_unit_mlp2.bin";
        back.save(again);
        std::ifstream a(path, std::ios::binary), b(again, std::ios::binary);
        std::stringstream sa, sb;
        sa << a.rdbuf();
        sb << b.rdbuf();
        CHECK(sa.str() == sb.str());
        {
            std::ofstream out(again, std::ios::binary | std::ios::trunc);
            out << sa.str().substr(0, sa.str().size() - 9);
        }
        CHECK_THROWS(TrainedRegressor::load(again));
        std::filesystem::remove(path);
        std::filesystem::remove(again);
    }
}
