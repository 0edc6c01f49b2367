#include <doctest.h>

#include "mdiqa/errors.hpp"
#include "mdiqa/optim.hpp"
#include "mdiqa/trainer.hpp"

#include <cmath>
#include <set>

using namespace mdiqa;

namespace {

TrainConfig tiny_config() {
    TrainConfig cfg;
    cfg.model.input_size = 16;
    cfg.model.depth = 2;
    cfg.model.base_channels = 4;
    cfg.model.fused_channels = 8;
    cfg.model.codec.grid_size = 41;
    cfg.batch_size = 4;
    cfg.epochs = 2;
    cfg.learning_rate = 1e-3;
    return cfg;
}

Dataset tiny_data() {
    SyntheticConfig d;
    d.image_size = 16;
    d.n_labeled = 30;
    d.n_unlabeled = 10;
    d.seed = 3;
    return generate_synthetic(d);
}

std::vector<double> flat(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

bool same_params(const QualityModel& a, const QualityModel& b) {
    for (std::size_t i = 0; i < a.parameters().size(); ++i)
        if (flat(a.parameters()[i].tensor) != flat(b.parameters()[i].tensor))
            return false;
    return true;
}

} // namespace

TEST_CASE("adam step") {
    std::vector<double> p{1.0, -2.0}, m(2, 0.0), v(2, 0.0);
    const std::vector<double> zero(2, 0.0);
    AdamOptions o;
    adam_step(p, zero, m, v, o, 1);
    CHECK(p == std::vector<double>{1.0, -2.0});

    const std::vector<double> g{0.3, -5.0};
    adam_step(p, g, m, v, o, 1);
    // Bias-corrected ratio is g / |g| on the first step.
    CHECK(p[0] == doctest::Approx(1.0 - o.learning_rate).epsilon(1e-9));
    CHECK(p[1] == doctest::Approx(-2.0 + o.learning_rate).epsilon(1e-9));
    CHECK_THROWS_AS(adam_step(p, g, m, v, o, 0), DomainError);
}

TEST_CASE("adam is deterministic") {
    auto run = [] {
        Tensor w = Tensor::from({3}, {0.5, -0.5, 2.0}, true);
        Adam opt({w}, {});
        for (int i = 0; i < 10; ++i) {
            opt.zero_grad();
            w.grad_buffer()[0] = 0.1 * i;
            w.grad_buffer()[1] = -0.3;
            w.grad_buffer()[2] = std::sin(i);
            opt.step();
        }
        return flat(w);
    };
    CHECK(run() == run());
}

TEST_CASE("epoch sampler covers every index once per epoch") {
    EpochSampler s(10, 4, 1);
    CHECK(s.batches_per_epoch() == 3);
    for (int epoch = 0; epoch < 3; ++epoch) {
        std::multiset<std::size_t> seen;
        for (int b = 0; b < 3; ++b)
            for (auto i : s.next())
                seen.insert(i);
        CHECK(seen.size() == 10);
        CHECK(std::set<std::size_t>(seen.begin(), seen.end()).size() == 10);
    }
}

TEST_CASE("supervised training is deterministic and finite") {
    const auto ds = tiny_data();
    const auto cfg = tiny_config();
    const auto a = train_supervised(ds.train, cfg, 7);
    const auto b = train_supervised(ds.train, cfg, 7);
    CHECK(serialize_checkpoint(a) == serialize_checkpoint(b));
    CHECK(a.iteration == cfg.epochs * 6);
    REQUIRE(a.trace.size() == a.iteration);
    for (const auto& row : a.trace)
        CHECK(std::isfinite(row.l_sup));
    // EMA shadow starts at the final weights.
    for (std::size_t i = 0; i < a.ema.size(); ++i)
        CHECK(flat(a.ema[i]) == flat(a.model.parameters()[i].tensor));
    const auto c = train_supervised(ds.train, cfg, 8);
    CHECK_FALSE(same_params(a.model, c.model));
}

TEST_CASE("training input validation") {
    const auto cfg = tiny_config();
    CHECK_THROWS_AS(train_supervised(Manifest{}, cfg, 1), ConfigError);
    const auto ds = tiny_data();
    CHECK_THROWS_AS(train_supervised(ds.unlabeled, cfg, 1), ConfigError);
    CHECK_THROWS_AS(train_joint(ds.train, Manifest{}, cfg, 1), ConfigError);
    auto bad = cfg;
    bad.batch_size = 0;
    CHECK_THROWS_AS(train_supervised(ds.train, bad, 1), ConfigError);
    bad = cfg;
    bad.ema_alpha = 1.5;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("pseudo labels") {
    const auto ds = tiny_data();
    const auto cfg = tiny_config();
    const auto a = train_supervised(ds.train, cfg, 1);
    const auto b = train_supervised(ds.train, cfg, 2);

    const auto single = generate_pseudo_labels({&a}, ds.unlabeled, cfg);
    const auto pa = predict_manifest(a.model, ds.unlabeled, cfg);
    const auto pb = predict_manifest(b.model, ds.unlabeled, cfg);
    REQUIRE(single.size() == ds.unlabeled.size());
    for (std::size_t i = 0; i < single.size(); ++i) {
        CHECK(*single.records[i].score == pa[i]);
        CHECK(single.records[i].origin == Origin::Pseudo);
        CHECK(single.records[i].id == ds.unlabeled.records[i].id);
    }
    const auto twice = generate_pseudo_labels({&a, &a}, ds.unlabeled, cfg);
    CHECK(twice == single);
    const auto pair = generate_pseudo_labels({&a, &b}, ds.unlabeled, cfg);
    for (std::size_t i = 0; i < pair.size(); ++i) {
        CHECK(*pair.records[i].score == doctest::Approx((pa[i] + pb[i]) / 2.0).epsilon(1e-15));
        CHECK(*pair.records[i].score >= 0.0);
        CHECK(*pair.records[i].score <= 4.0);
    }

    auto other = cfg;
    other.model.fused_channels = 6;
    CHECK_THROWS_AS(generate_pseudo_labels({&a}, ds.unlabeled, other), ConfigError);
}

TEST_CASE("prediction fan-out does not change results") {
    const auto ds = tiny_data();
    auto cfg = tiny_config();
    const auto ckpt = train_supervised(ds.train, cfg, 1);
    const auto serial = predict_manifest(ckpt.model, ds.train, cfg);
    cfg.workers = 3;
    CHECK(predict_manifest(ckpt.model, ds.train, cfg) == serial);
}

TEST_CASE("joint training degenerates to supervised training") {
    const auto ds = tiny_data();
    auto cfg = tiny_config();
    const auto sup = train_supervised(ds.train, cfg, 5);
    const auto pseudo = generate_pseudo_labels({&sup}, ds.unlabeled, cfg);
    cfg.lambda2 = 0.0;
    cfg.consistency = false;
    const auto joint = train_joint(ds.train, pseudo, cfg, 5);
    CHECK(same_params(joint.model, sup.model));
    CHECK(joint.adam_m == sup.adam_m);
    CHECK(joint.adam_v == sup.adam_v);
    CHECK(joint.iteration == sup.iteration);
}

TEST_CASE("joint training trace and EMA teacher") {
    const auto ds = tiny_data();
    auto cfg = tiny_config();
    const auto sup = train_supervised(ds.train, cfg, 5);
    const auto pseudo = generate_pseudo_labels({&sup}, ds.unlabeled, cfg);
    cfg.max_iterations = 3;
    std::vector<std::vector<double>> first_params;
    const auto joint = train_joint(ds.train, pseudo, cfg, 5, nullptr,
                                   [&](std::uint64_t, const QualityModel&, const std::vector<Tensor>& ema) {
                                       if (first_params.empty())
                                           for (const auto& t : ema)
                                               first_params.push_back(flat(t));
                                   });
    REQUIRE(joint.trace.size() == 3);
    CHECK(joint.trace[0].lambda3 == 0.0);
    CHECK(joint.trace[0].l_cons == 0.0);
    CHECK(joint.trace[1].lambda3 > 0.0);
    // The teacher moved after the first step but is not the student.
    CHECK_FALSE(same_params(joint.model, sup.model));
    CHECK_FALSE(first_params.empty());
}

TEST_CASE("joint training from a checkpoint") {
    const auto ds = tiny_data();
    auto cfg = tiny_config();
    const auto sup = train_supervised(ds.train, cfg, 5);
    const auto pseudo = generate_pseudo_labels({&sup}, ds.unlabeled, cfg);
    cfg.joint_init = JointInit::FromCheckpoint;
    cfg.max_iterations = 1;
    CHECK_THROWS_AS(train_joint(ds.train, pseudo, cfg, 5), ConfigError);
    cfg.ema_alpha = 1.0;
    const auto joint = train_joint(ds.train, pseudo, cfg, 5, &sup);
    // With alpha = 1 the teacher is still the initial checkpoint.
    for (std::size_t i = 0; i < joint.ema.size(); ++i)
        CHECK(flat(joint.ema[i]) == flat(sup.model.parameters()[i].tensor));
}

TEST_CASE("evaluation and CSV output") {
    const auto ds = tiny_data();
    const auto cfg = tiny_config();
    const auto ckpt = train_supervised(ds.train, cfg, 2);
    try {
        const auto ev = evaluate(ckpt, ds.test, cfg);
        CHECK(ev.predictions.size() == ds.test.size());
        std::vector<double> p, t;
        for (const auto& row : ev.predictions) {
            p.push_back(row.predicted);
            t.push_back(row.truth);
        }
        CHECK(ev.report.overall == overall(p, t));
    } catch (const DegenerateInputError&) {
        // A barely trained model may predict a constant; that must surface as an error, never NaN.
    }
    CHECK_THROWS_AS(evaluate(ckpt, ds.unlabeled, cfg), ConfigError);

    const auto csv = predictions_csv({{"L00001", 1.2, 1.24}});
    CHECK(csv == "image_id,true_score,predicted_score\nL00001,1.2,1.24\n");
    const auto trace = trace_csv({{0, 0.5, 0.25, 0.0, 0.0}});
    CHECK(trace == "iteration,l_sup,l_pseudo,l_cons,lambda3\n0,0.5,0.25,0,0\n");
}
