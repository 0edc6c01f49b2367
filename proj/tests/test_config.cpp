#include <doctest.h>

#include "mdiqa/config.hpp"
#include "mdiqa/errors.hpp"

using namespace mdiqa;

TEST_CASE("defaults match the documented values") {
    const RunConfig cfg;
    CHECK(cfg.train.batch_size == 16);
    CHECK(cfg.train.epochs == 30);
    CHECK(cfg.train.learning_rate == 1e-4);
    CHECK(cfg.train.ema_alpha == 0.997);
    CHECK(cfg.train.lambda1 == 1.0);
    CHECK(cfg.train.lambda2 == 0.1);
    CHECK(cfg.train.beta == 0.1);
    CHECK(cfg.train.adam_beta1 == 0.9);
    CHECK(cfg.train.adam_beta2 == 0.999);
    CHECK(cfg.train.adam_eps == 1e-8);
    CHECK(cfg.train.model.codec.max_score == 4.0);
    CHECK(cfg.train.model.codec.grid_size == 101);
    CHECK(cfg.data.n_labeled == 1000);
    CHECK(cfg.data.n_unlabeled == 490);
    CHECK(cfg.data.image_size == 64);
}

TEST_CASE("parse, override and echo") {
    auto cfg = RunConfig::parse("# comment\n[train]\nepochs = 5\nlearning_rate = 0.001\n\n[codec]\nscales = 0.01, 0.03\n"
                                "[run]\nseed = 9\n");
    CHECK(cfg.train.epochs == 5);
    CHECK(cfg.train.learning_rate == 0.001);
    CHECK(cfg.train.model.codec.scales == std::vector<double>{0.01, 0.03});
    cfg.apply_override("train.kl_direction=pred_target");
    CHECK(cfg.train.kl_direction == KlDirection::PredictionToTarget);
    cfg.finalize();
    CHECK(cfg.train.seed == 9);
    CHECK(cfg.data.seed == 9);

    const auto echo = cfg.to_text();
    auto back = RunConfig::parse(echo);
    back.finalize();
    CHECK(back.to_text() == echo);
    CHECK(RunConfig{}.to_text() == RunConfig::parse(RunConfig{}.to_text()).to_text());
    CHECK(RunConfig::known_keys().size() > 30);
}

TEST_CASE("unknown keys and bad values are rejected with the key named") {
    auto expect = [](const std::string& text, const std::string& needle) {
        try {
            RunConfig::parse(text);
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find(needle) != std::string::npos);
        }
    };
    expect("[train]\nepoch = 3\n", "train.epoch");
    expect("[bogus]\n", "bogus");
    expect("[train]\nepochs = three\n", "train.epochs");
    expect("epochs = 3\n", "outside");
    expect("[train]\nkl_direction = sideways\n", "kl_direction");
    RunConfig cfg;
    CHECK_THROWS_AS(cfg.apply_override("nodot=1"), ConfigError);
    CHECK_THROWS_AS(cfg.apply_override("model.unknown=1"), ConfigError);
}

TEST_CASE("cross-section checks") {
    RunConfig cfg;
    cfg.data.image_size = 32;
    CHECK_THROWS_AS(cfg.finalize(), ConfigError);
    cfg = {};
    cfg.train.model.depth = 7;
    CHECK_THROWS_AS(cfg.finalize(), ConfigError);
    cfg = {};
    cfg.workers = 0;
    CHECK_THROWS_AS(cfg.finalize(), ConfigError);
    CHECK_THROWS_AS(RunConfig::load("/nonexistent/run.cfg"), IoError);
}
