#pragma once

#include "mdiqa/checkpoint.hpp"
#include "mdiqa/data.hpp"
#include "mdiqa/losses.hpp"
#include "mdiqa/metrics.hpp"
#include "mdiqa/model.hpp"
#include "mdiqa/optim.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace mdiqa {

enum class JointInit { Fresh, FromCheckpoint };

struct TrainConfig {
    std::size_t batch_size = 16;
    std::size_t epochs = 30;
    double learning_rate = 1e-4;
    double ema_alpha = 0.997;
    double lambda1 = 1.0;
    double lambda2 = 0.1;
    double beta = 0.1;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double kl_eps = 1e-8;
    KlDirection kl_direction = KlDirection::TargetToPrediction;
    bool consistency = true; ///< false pins lambda3 to 0
    double warmup_iterations = 400.0;
    double warmup_target = 0.1;
    bool augment = true;
    std::size_t ensemble_size = 3;
    JointInit joint_init = JointInit::Fresh;
    std::size_t max_iterations = 0; ///< 0: run every epoch
    std::uint64_t seed = 0;
    std::size_t workers = 1;
    ModelConfig model;

    const CodecConfig& codec() const { return model.codec; }
    LossWeights loss_weights() const;
    AdamOptions adam() const;
    void validate() const;
};

/// Shuffled pass over [0, n) in batches; the last batch of an epoch may be
/// short, and the order is reshuffled at every epoch boundary.
class EpochSampler {
public:
    EpochSampler(std::size_t n, std::size_t batch_size, std::uint64_t seed);

    std::vector<std::size_t> next();
    std::size_t batches_per_epoch() const { return (n_ + batch_ - 1) / batch_; }

private:
    void reshuffle();

    std::size_t n_, batch_;
    std::mt19937_64 rng_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
};

/// Called after every optimizer step with the post-step state.
using StepObserver = std::function<void(std::uint64_t iteration, const QualityModel& student,
                                        const std::vector<Tensor>& ema)>;

/// Step 1: fits one model on labeled data with the supervised loss only.
Checkpoint train_supervised(const Manifest& labeled, const TrainConfig& cfg, std::uint64_t seed,
                            const StepObserver& observer = {});

/// Step 1 for the whole ensemble: member i uses seed derive_seed(cfg.seed, 100 + i).
std::vector<Checkpoint> train_ensemble(const Manifest& labeled, const TrainConfig& cfg);
std::uint64_t ensemble_member_seed(std::uint64_t seed, std::size_t member);

/// Step 2: mean of the ensemble's decoded scores per unlabeled image.
Manifest generate_pseudo_labels(const std::vector<const Checkpoint*>& ensemble, const Manifest& unlabeled,
                                const TrainConfig& cfg);

/// Step 3: joint training on labeled + pseudo-labeled data with an EMA teacher.
/// `init` seeds the student when cfg.joint_init is FromCheckpoint.
Checkpoint train_joint(const Manifest& labeled, const Manifest& pseudo, const TrainConfig& cfg, std::uint64_t seed,
                       const Checkpoint* init = nullptr, const StepObserver& observer = {});

struct Prediction {
    std::string id;
    double truth = 0.0;
    double predicted = 0.0;
};

struct Evaluation {
    MetricReport report;
    std::vector<Prediction> predictions;
};

/// Scores every image of the manifest (students' weights); fans out over
/// cfg.workers threads with results kept in manifest order.
std::vector<double> predict_manifest(const QualityModel& model, const Manifest& manifest, const TrainConfig& cfg);

Evaluation evaluate(const Checkpoint& checkpoint, const Manifest& manifest, const TrainConfig& cfg);

std::string predictions_csv(const std::vector<Prediction>& predictions);
std::string trace_csv(const std::vector<TraceRow>& trace);

/// Batch tensor [B,1,S,S] from the given records, optionally augmented.
Tensor make_batch(const Manifest& manifest, std::span<const std::size_t> indices, std::mt19937_64* augment_rng);

} // namespace mdiqa
