#include "mdiqa/trainer.hpp"

#include "mdiqa/augment.hpp"
#include "mdiqa/config.hpp"
#include "mdiqa/errors.hpp"
#include "mdiqa/ops.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <optional>
#include <thread>

namespace mdiqa {

namespace {

// Random streams derived from the run seed.
constexpr std::uint64_t kInitStream = 0;
constexpr std::uint64_t kLabeledBatchStream = 1;
constexpr std::uint64_t kLabeledAugmentStream = 2;
constexpr std::uint64_t kPseudoBatchStream = 3;
constexpr std::uint64_t kPseudoAugmentStream = 4;
constexpr std::uint64_t kEnsembleStreamBase = 100;

std::string fmt(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

void require_scored(const Manifest& m, const char* what) {
    if (m.empty())
        throw ConfigError(std::string(what) + ": manifest is empty");
    for (const auto& r : m.records)
        if (!r.score)
            throw ConfigError(std::string(what) + ": record " + r.id + " has no score");
}

std::vector<double> scores_of(const Manifest& m, std::span<const std::size_t> indices) {
    std::vector<double> out;
    out.reserve(indices.size());
    for (auto i : indices)
        out.push_back(*m.records[i].score);
    return out;
}

std::string config_echo(const TrainConfig& cfg) {
    RunConfig rc;
    rc.train = cfg;
    rc.seed = cfg.seed;
    rc.workers = cfg.workers;
    rc.data.image_size = cfg.model.input_size;
    rc.data.max_score = cfg.model.codec.max_score;
    return rc.to_text();
}

std::uint64_t total_iterations(const TrainConfig& cfg, std::size_t batches_per_epoch) {
    const auto full = static_cast<std::uint64_t>(cfg.epochs * batches_per_epoch);
    return cfg.max_iterations == 0 ? full : std::min<std::uint64_t>(full, cfg.max_iterations);
}

void check_finite(const Tensor& loss, std::uint64_t t) {
    if (!std::isfinite(loss.item()))
        throw NumericError("training diverged: non-finite loss at iteration " + std::to_string(t));
}

Checkpoint finish(QualityModel model, std::vector<Tensor> ema, const Adam& adam, std::vector<TraceRow> trace,
                  const TrainConfig& cfg) {
    Checkpoint ckpt{std::move(model), std::move(ema), adam.first_moments(), adam.second_moments(), adam.steps(),
                    config_echo(cfg), std::move(trace)};
    return ckpt;
}

} // namespace

LossWeights TrainConfig::loss_weights() const {
    LossWeights w;
    w.lambda1 = lambda1;
    w.lambda2 = lambda2;
    w.beta = beta;
    w.warmup_iterations = warmup_iterations;
    w.warmup_target = warmup_target;
    w.consistency_enabled = consistency;
    return w;
}

AdamOptions TrainConfig::adam() const { return {learning_rate, adam_beta1, adam_beta2, adam_eps}; }

void TrainConfig::validate() const {
    model.validate();
    loss_weights().validate();
    if (batch_size < 1)
        throw ConfigError("train: batch_size must be at least 1");
    if (!(ema_alpha >= 0.0 && ema_alpha <= 1.0))
        throw ConfigError("train: ema_alpha must lie in [0, 1]");
    if (!(learning_rate > 0.0))
        throw ConfigError("train: learning_rate must be positive");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0) || !(adam_eps > 0.0))
        throw ConfigError("train: invalid Adam hyperparameters");
    if (!(kl_eps > 0.0))
        throw ConfigError("train: kl_eps must be positive");
    if (ensemble_size < 1)
        throw ConfigError("train: ensemble_size must be at least 1");
    if (workers < 1)
        throw ConfigError("train: workers must be at least 1");
}

EpochSampler::EpochSampler(std::size_t n, std::size_t batch_size, std::uint64_t seed)
    : n_(n), batch_(batch_size), rng_(seed), order_(n) {
    if (n == 0 || batch_size == 0)
        throw ConfigError("sampler: empty dataset or zero batch size");
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    reshuffle();
}

void EpochSampler::reshuffle() {
    std::shuffle(order_.begin(), order_.end(), rng_);
    cursor_ = 0;
}

std::vector<std::size_t> EpochSampler::next() {
    if (cursor_ >= n_)
        reshuffle();
    const auto end = std::min(n_, cursor_ + batch_);
    std::vector<std::size_t> out(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                                 order_.begin() + static_cast<std::ptrdiff_t>(end));
    cursor_ = end;
    return out;
}

Tensor make_batch(const Manifest& manifest, std::span<const std::size_t> indices, std::mt19937_64* augment_rng) {
    if (indices.empty())
        throw ConfigError("make_batch: empty batch");
    const auto side = manifest.records[indices[0]].side;
    std::vector<double> values;
    values.reserve(indices.size() * side * side);
    for (auto i : indices) {
        const auto& r = manifest.records.at(i);
        if (r.side != side || r.pixels.size() != side * side)
            throw ShapeError("make_batch: record " + r.id + " has a different size");
        if (augment_rng) {
            const auto img = augment(r.pixels, *augment_rng);
            values.insert(values.end(), img.begin(), img.end());
        } else {
            values.insert(values.end(), r.pixels.begin(), r.pixels.end());
        }
    }
    return Tensor::from({indices.size(), 1, side, side}, std::move(values));
}

Checkpoint train_supervised(const Manifest& labeled, const TrainConfig& cfg, std::uint64_t seed,
                            const StepObserver& observer) {
    cfg.validate();
    require_scored(labeled, "train_supervised");

    QualityModel model = init_model(cfg.model, derive_seed(seed, kInitStream));
    Adam adam(model.parameter_tensors(), cfg.adam());
    EpochSampler sampler(labeled.size(), cfg.batch_size, derive_seed(seed, kLabeledBatchStream));
    std::mt19937_64 augment_rng(derive_seed(seed, kLabeledAugmentStream));

    LossWeights weights = cfg.loss_weights();
    weights.lambda2 = 0.0;
    weights.consistency_enabled = false;

    const auto iterations = total_iterations(cfg, sampler.batches_per_epoch());
    std::vector<TraceRow> trace;
    trace.reserve(iterations);
    for (std::uint64_t t = 0; t < iterations; ++t) {
        const auto idx = sampler.next();
        const Tensor images = make_batch(labeled, idx, cfg.augment ? &augment_rng : nullptr);
        const auto targets = make_targets(scores_of(labeled, idx), cfg.codec());

        const auto pred = model.forward(images);
        const Tensor sup = supervised_loss(pred, targets, cfg.beta, cfg.kl_eps, cfg.kl_direction);
        const Tensor loss = total_loss(sup, {}, {}, weights, t);
        check_finite(loss, t);

        adam.zero_grad();
        loss.backward();
        adam.step();
        trace.push_back({t, sup.item(), 0.0, 0.0, 0.0});
        if (observer)
            observer(t, model, {});
    }

    std::vector<Tensor> ema;
    for (const auto& p : model.parameters())
        ema.push_back(p.tensor.clone(false));
    return finish(std::move(model), std::move(ema), adam, std::move(trace), cfg);
}

std::uint64_t ensemble_member_seed(std::uint64_t seed, std::size_t member) {
    return derive_seed(seed, kEnsembleStreamBase + member);
}

std::vector<Checkpoint> train_ensemble(const Manifest& labeled, const TrainConfig& cfg) {
    std::vector<Checkpoint> out;
    for (std::size_t i = 0; i < cfg.ensemble_size; ++i)
        out.push_back(train_supervised(labeled, cfg, ensemble_member_seed(cfg.seed, i)));
    return out;
}

std::vector<double> predict_manifest(const QualityModel& model, const Manifest& manifest, const TrainConfig& cfg) {
    const auto n = manifest.size();
    std::vector<double> out(n);
    const auto batch = cfg.batch_size;
    const auto batches = (n + batch - 1) / batch;
    auto run = [&](std::size_t first_batch, std::size_t stride) {
        for (std::size_t b = first_batch; b < batches; b += stride) {
            std::vector<std::size_t> idx(std::min(batch, n - b * batch));
            std::iota(idx.begin(), idx.end(), b * batch);
            const auto scores = predict_scores(model, make_batch(manifest, idx, nullptr), cfg.codec());
            std::copy(scores.begin(), scores.end(), out.begin() + static_cast<std::ptrdiff_t>(b * batch));
        }
    };
    const auto workers = std::max<std::size_t>(1, std::min(cfg.workers, batches));
    if (workers == 1) {
        run(0, 1);
        return out;
    }
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back(run, w, workers);
    for (auto& t : pool)
        t.join();
    return out;
}

Manifest generate_pseudo_labels(const std::vector<const Checkpoint*>& ensemble, const Manifest& unlabeled,
                                const TrainConfig& cfg) {
    if (ensemble.empty())
        throw ConfigError("pseudo-label: at least one checkpoint is required");
    if (unlabeled.empty())
        throw ConfigError("pseudo-label: unlabeled manifest is empty");
    for (const auto* ckpt : ensemble)
        if (!(ckpt->model.config() == cfg.model))
            throw ConfigError("pseudo-label: checkpoint architecture does not match the config");

    std::vector<double> total(unlabeled.size(), 0.0);
    for (const auto* ckpt : ensemble) {
        const auto scores = predict_manifest(ckpt->model, unlabeled, cfg);
        for (std::size_t i = 0; i < total.size(); ++i)
            total[i] += scores[i];
    }
    Manifest out;
    out.split = Split::Pseudo;
    out.records = unlabeled.records;
    const auto members = static_cast<double>(ensemble.size());
    for (std::size_t i = 0; i < out.records.size(); ++i) {
        out.records[i].score = std::clamp(total[i] / members, 0.0, cfg.codec().max_score);
        out.records[i].origin = Origin::Pseudo;
    }
    return out;
}

Checkpoint train_joint(const Manifest& labeled, const Manifest& pseudo, const TrainConfig& cfg, std::uint64_t seed,
                       const Checkpoint* init, const StepObserver& observer) {
    cfg.validate();
    require_scored(labeled, "train_joint (labeled)");
    require_scored(pseudo, "train_joint (pseudo)");

    QualityModel model = [&] {
        if (cfg.joint_init == JointInit::Fresh)
            return init_model(cfg.model, derive_seed(seed, kInitStream));
        if (!init)
            throw ConfigError("train_joint: joint_init = checkpoint but no checkpoint was given");
        if (!(init->model.config() == cfg.model))
            throw ConfigError("train_joint: initial checkpoint architecture does not match the config");
        return init->model.clone(true);
    }();
    // The teacher starts equal to the student and only ever moves by EMA mixing.
    QualityModel teacher = model.clone(false);
    std::vector<Tensor> ema = teacher.parameter_tensors();
    const std::vector<Tensor> student_params = model.parameter_tensors();

    Adam adam(student_params, cfg.adam());
    EpochSampler labeled_sampler(labeled.size(), cfg.batch_size, derive_seed(seed, kLabeledBatchStream));
    EpochSampler pseudo_sampler(pseudo.size(), cfg.batch_size, derive_seed(seed, kPseudoBatchStream));
    std::mt19937_64 labeled_augment(derive_seed(seed, kLabeledAugmentStream));
    std::mt19937_64 pseudo_augment(derive_seed(seed, kPseudoAugmentStream));
    const LossWeights weights = cfg.loss_weights();

    // An epoch is one pass over the longer manifest; the shorter one cycles.
    const auto iterations = total_iterations(
        cfg, std::max(labeled_sampler.batches_per_epoch(), pseudo_sampler.batches_per_epoch()));
    std::vector<TraceRow> trace;
    trace.reserve(iterations);
    for (std::uint64_t t = 0; t < iterations; ++t) {
        const auto idx_l = labeled_sampler.next();
        const Tensor x_l = make_batch(labeled, idx_l, cfg.augment ? &labeled_augment : nullptr);
        const auto y_l = make_targets(scores_of(labeled, idx_l), cfg.codec());
        const auto idx_u = pseudo_sampler.next();
        const Tensor x_u = make_batch(pseudo, idx_u, cfg.augment ? &pseudo_augment : nullptr);
        const auto y_u = make_targets(scores_of(pseudo, idx_u), cfg.codec());
        const double lambda3 = weights.lambda3(t);

        const Tensor sup = supervised_loss(model.forward(x_l), y_l, cfg.beta, cfg.kl_eps, cfg.kl_direction);
        Tensor pseudo_term, cons_term;
        {
            // Terms with zero weight are still reported but kept off the tape.
            std::optional<NoGradGuard> off_tape;
            if (weights.lambda2 == 0.0 && lambda3 == 0.0)
                off_tape.emplace();
            const auto pred_u = model.forward(x_u);
            pseudo_term = pseudo_loss(pred_u, y_u, cfg.beta, cfg.kl_eps, cfg.kl_direction);
            ScaleTensors teacher_u;
            {
                NoGradGuard no_grad;
                teacher_u = teacher.forward(x_u);
            }
            cons_term = consistency_loss(pred_u, teacher_u);
        }
        const Tensor loss = total_loss(sup, pseudo_term, cons_term, weights, t);
        check_finite(loss, t);

        adam.zero_grad();
        loss.backward();
        adam.step();
        ema_update(ema, student_params, cfg.ema_alpha);
        trace.push_back({t, sup.item(), pseudo_term.item(), cons_term.item(), lambda3});
        if (observer)
            observer(t, model, ema);
    }
    return finish(std::move(model), std::move(ema), adam, std::move(trace), cfg);
}

Evaluation evaluate(const Checkpoint& checkpoint, const Manifest& manifest, const TrainConfig& cfg) {
    if (manifest.empty())
        throw ConfigError("evaluate: manifest is empty");
    for (const auto& r : manifest.records)
        if (!r.score)
            throw ConfigError("evaluate: record " + r.id + " is unlabeled");
    const auto predicted = predict_manifest(checkpoint.model, manifest, cfg);
    Evaluation ev;
    std::vector<double> truth;
    for (std::size_t i = 0; i < manifest.size(); ++i) {
        ev.predictions.push_back({manifest.records[i].id, *manifest.records[i].score, predicted[i]});
        truth.push_back(*manifest.records[i].score);
    }
    ev.report = evaluate_metrics(predicted, truth);
    return ev;
}

std::string predictions_csv(const std::vector<Prediction>& predictions) {
    std::string out = "image_id,true_score,predicted_score\n";
    for (const auto& p : predictions)
        out += p.id + "," + fmt(p.truth) + "," + fmt(p.predicted) + "\n";
    return out;
}

std::string trace_csv(const std::vector<TraceRow>& trace) {
    std::string out = "iteration,l_sup,l_pseudo,l_cons,lambda3\n";
    for (const auto& r : trace)
        out += std::to_string(r.iteration) + "," + fmt(r.l_sup) + "," + fmt(r.l_pseudo) + "," + fmt(r.l_cons) + "," +
               fmt(r.lambda3) + "\n";
    return out;
}

} // namespace mdiqa
