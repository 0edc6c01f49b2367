#include "mdiqa/cli.hpp"

#include "mdiqa/codec.hpp"
#include "mdiqa/config.hpp"
#include "mdiqa/errors.hpp"
#include "mdiqa/grad_suite.hpp"
#include "mdiqa/trainer.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;

namespace mdiqa {

namespace {

std::string fmt(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

struct Common {
    std::string config_path;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> workers;
    std::string out;
};

void add_common(CLI::App* app, Common& c, bool needs_out) {
    app->add_option("--config", c.config_path, "config file (key = value lines)");
    app->add_option("--set", c.overrides, "override, e.g. train.epochs=5")->take_all();
    app->add_option("--seed", c.seed, "run seed");
    app->add_option("--workers", c.workers, "worker threads");
    auto* out = app->add_option("--out", c.out, "output path");
    if (needs_out)
        out->required();
}

RunConfig resolve(const Common& c) {
    RunConfig cfg = c.config_path.empty() ? RunConfig{} : RunConfig::load(c.config_path);
    for (const auto& o : c.overrides)
        cfg.apply_override(o);
    if (c.seed)
        cfg.seed = *c.seed;
    if (c.workers)
        cfg.workers = *c.workers;
    cfg.finalize();
    return cfg;
}

fs::path with_suffix(const fs::path& p, const std::string& suffix) { return fs::path(p.string() + suffix); }

void write_checkpoint_artifacts(const Checkpoint& ckpt, const fs::path& out) {
    if (out.has_parent_path())
        fs::create_directories(out.parent_path());
    save_checkpoint(ckpt, out);
    write_text_file(with_suffix(out, ".trace.csv"), trace_csv(ckpt.trace));
    write_text_file(with_suffix(out, ".config.txt"), ckpt.config_text);
}

void print_training_summary(const Checkpoint& ckpt, const fs::path& out) {
    std::cout << "iterations: " << ckpt.iteration << "\n";
    if (!ckpt.trace.empty()) {
        std::cout << "initial_l_sup: " << fmt(ckpt.trace.front().l_sup) << "\n";
        std::cout << "final_l_sup: " << fmt(ckpt.trace.back().l_sup) << "\n";
    }
    std::cout << "checkpoint: " << out.generic_string() << "\n";
    std::cout << "trace: " << with_suffix(out, ".trace.csv").generic_string() << "\n";
}

Manifest load_split(const fs::path& data_dir, Split split) {
    return read_manifest(data_dir / "manifests" / (to_string(split) + ".csv"), data_dir, split);
}

Split parse_split(const std::string& s) {
    for (Split sp : {Split::Train, Split::Val, Split::Test, Split::Unlabeled, Split::Pseudo})
        if (to_string(sp) == s)
            return sp;
    throw ConfigError("unknown split '" + s + "'");
}

int cmd_gen_data(const Common& c) {
    const auto cfg = resolve(c);
    const auto ds = generate_synthetic(cfg.data);
    save_dataset(ds, c.out, cfg.to_text());
    write_text_file(fs::path(c.out) / "config.txt", cfg.to_text());
    std::cout << "train: " << ds.train.size() << "\n";
    std::cout << "val: " << ds.val.size() << "\n";
    std::cout << "test: " << ds.test.size() << "\n";
    std::cout << "unlabeled: " << ds.unlabeled.size() << "\n";
    for (const Manifest* m : {&ds.train, &ds.val, &ds.test, &ds.unlabeled})
        std::cout << "checksum_" << to_string(m->split) << ": " << m->checksum() << "\n";
    std::cout << "out: " << fs::path(c.out).generic_string() << "\n";
    return kExitOk;
}

int cmd_train(const Common& c, const std::string& data_dir, std::size_t member) {
    const auto cfg = resolve(c);
    const auto labeled = load_split(data_dir, Split::Train);
    const auto seed = ensemble_member_seed(cfg.seed, member);
    const auto ckpt = train_supervised(labeled, cfg.train, seed);
    write_checkpoint_artifacts(ckpt, c.out);
    std::cout << "member: " << member << "\n";
    print_training_summary(ckpt, c.out);
    return kExitOk;
}

int cmd_pseudo_label(const Common& c, const std::string& data_dir, const std::vector<std::string>& ckpt_paths) {
    auto cfg = resolve(c);
    std::vector<Checkpoint> ckpts;
    for (const auto& p : ckpt_paths)
        ckpts.push_back(load_checkpoint(p));
    // Architecture comes from the checkpoints; batch size and workers from the run config.
    cfg.train.model = ckpts.front().model.config();
    std::vector<const Checkpoint*> members;
    for (const auto& ck : ckpts)
        members.push_back(&ck);
    const auto unlabeled = load_split(data_dir, Split::Unlabeled);
    const auto pseudo = generate_pseudo_labels(members, unlabeled, cfg.train);
    const fs::path out(c.out);
    if (out.has_parent_path())
        fs::create_directories(out.parent_path());
    write_manifest(pseudo, out);
    write_text_file(with_suffix(out, ".config.txt"), cfg.to_text());
    std::cout << "members: " << members.size() << "\n";
    std::cout << "records: " << pseudo.size() << "\n";
    std::cout << "manifest: " << out.generic_string() << "\n";
    return kExitOk;
}

int cmd_train_joint(const Common& c, const std::string& data_dir, const std::string& pseudo_path,
                    const std::string& init_path) {
    const auto cfg = resolve(c);
    const auto labeled = load_split(data_dir, Split::Train);
    const auto pseudo = read_manifest(pseudo_path, data_dir, Split::Pseudo);
    std::optional<Checkpoint> init;
    if (!init_path.empty())
        init = load_checkpoint(init_path);
    if (cfg.train.joint_init == JointInit::FromCheckpoint && !init)
        throw ConfigError("train-joint: train.joint_init = checkpoint requires --init");
    const auto ckpt = train_joint(labeled, pseudo, cfg.train, cfg.seed, init ? &*init : nullptr);
    write_checkpoint_artifacts(ckpt, c.out);
    print_training_summary(ckpt, c.out);
    return kExitOk;
}

int cmd_eval(const Common& c, const std::string& ckpt_path, const std::string& data_dir, const std::string& split,
             const std::string& manifest_path) {
    auto cfg = resolve(c);
    const auto ckpt = load_checkpoint(ckpt_path);
    cfg.train.model = ckpt.model.config();
    const auto manifest = manifest_path.empty() ? load_split(data_dir, parse_split(split))
                                                : read_manifest(manifest_path, data_dir, parse_split(split));
    const auto ev = evaluate(ckpt, manifest, cfg.train);
    if (!c.out.empty()) {
        const fs::path out(c.out);
        if (out.has_parent_path())
            fs::create_directories(out.parent_path());
        write_text_file(out, predictions_csv(ev.predictions));
        write_text_file(with_suffix(out, ".metrics.txt"), format_report(ev.report));
    }
    std::cout << format_report(ev.report, 4);
    return kExitOk;
}

int cmd_grad_check(const Common& c, std::size_t instances, std::size_t coords) {
    const auto cfg = resolve(c);
    GradSuiteOptions options;
    options.instances = instances;
    options.seed = cfg.seed;
    options.model = cfg.train.model;
    options.model_coords_per_tensor = coords;
    const auto entries = run_grad_suite(options);
    bool ok = true;
    std::ostringstream report;
    for (const auto& e : entries) {
        std::ostringstream err;
        err << std::scientific << std::setprecision(3) << e.worst.max_rel_error;
        std::cout << e.name << ": " << (e.passed ? "pass" : "FAIL") << " max_rel_error=" << err.str()
                  << " tol=" << fmt(e.tol) << "\n";
        ok = ok && e.passed;
    }
    std::cout << "result: " << (ok ? "pass" : "fail") << "\n";
    return ok ? kExitOk : kExitGradCheck;
}

int cmd_codec(const Common& c, const std::vector<double>& scores, const std::vector<double>& vector_values) {
    const auto cfg = resolve(c);
    const auto& codec = cfg.train.codec();
    if (scores.empty() == vector_values.empty())
        throw ConfigError("codec: give either --score or --decode");
    if (!vector_values.empty()) {
        if (vector_values.size() != codec.grid_size)
            throw ConfigError("codec: --decode expects " + std::to_string(codec.grid_size) + " values");
        std::cout << "decoded: " << fmt(decode_distribution(vector_values, codec)) << "\n";
        return kExitOk;
    }
    for (double s : scores) {
        const auto encoded = encode_multiscale(s, codec);
        std::cout << "score: " << fmt(s) << "\n";
        for (const auto& v : encoded) {
            const auto peak = std::max_element(v.values.begin(), v.values.end()) - v.values.begin();
            std::cout << "scale_" << v.scale_index << ": sigma=" << fmt(codec.sigma(v.scale_index))
                      << " peak_index=" << peak << " decoded=" << fmt(decode_distribution(v, codec)) << "\n";
        }
        std::cout << "decoded: " << fmt(decode_multiscale(encoded, codec)) << "\n";
    }
    return kExitOk;
}

} // namespace

int run_cli(int argc, char** argv) {
    CLI::App app{"mdiqa: multi-scale distribution regression for image quality assessment"};
    app.require_subcommand(1);

    Common common;
    std::string data_dir, pseudo_path, init_path, ckpt_path, split = "test", manifest_path;
    std::vector<std::string> ckpt_paths;
    std::size_t member = 0, instances = 10, coords = 8;
    std::vector<double> scores, vector_values;

    auto* gen = app.add_subcommand("gen-data", "generate the synthetic corpus");
    add_common(gen, common, true);

    auto* train = app.add_subcommand("train", "supervised training of one ensemble member");
    add_common(train, common, true);
    train->add_option("--data", data_dir, "dataset directory")->required();
    train->add_option("--member", member, "ensemble member index (selects the seed stream)");

    auto* pseudo = app.add_subcommand("pseudo-label", "ensemble pseudo-labels for the unlabeled split");
    add_common(pseudo, common, true);
    pseudo->add_option("--data", data_dir, "dataset directory")->required();
    pseudo->add_option("checkpoints", ckpt_paths, "member checkpoints")->required();

    auto* joint = app.add_subcommand("train-joint", "joint training with pseudo-labels and an EMA teacher");
    add_common(joint, common, true);
    joint->add_option("--data", data_dir, "dataset directory")->required();
    joint->add_option("--pseudo", pseudo_path, "pseudo-label manifest")->required();
    joint->add_option("--init", init_path, "initial checkpoint (train.joint_init = checkpoint)");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    add_common(eval, common, false);
    eval->add_option("checkpoint", ckpt_path, "checkpoint")->required();
    eval->add_option("--data", data_dir, "dataset directory")->required();
    eval->add_option("--split", split, "train, val or test");
    eval->add_option("--manifest", manifest_path, "manifest CSV instead of a split");

    auto* grad = app.add_subcommand("grad-check", "finite-difference checks of ops and the model");
    add_common(grad, common, false);
    grad->add_option("--instances", instances, "random instances per check");
    grad->add_option("--coords", coords, "sampled coordinates per model tensor, 0 for all");

    auto* codec = app.add_subcommand("codec", "encode/decode scores");
    add_common(codec, common, false);
    codec->add_option("--score", scores, "scores to encode and decode");
    codec->add_option("--decode", vector_values, "distribution values to decode")->delimiter(',');

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (gen->parsed())
            return cmd_gen_data(common);
        if (train->parsed())
            return cmd_train(common, data_dir, member);
        if (pseudo->parsed())
            return cmd_pseudo_label(common, data_dir, ckpt_paths);
        if (joint->parsed())
            return cmd_train_joint(common, data_dir, pseudo_path, init_path);
        if (eval->parsed())
            return cmd_eval(common, ckpt_path, data_dir, split, manifest_path);
        if (grad->parsed())
            return cmd_grad_check(common, instances, coords);
        if (codec->parsed())
            return cmd_codec(common, scores, vector_values);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const DomainError& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return kExitConfig;
    } catch (const ShapeError& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return kExitConfig;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return kExitIo;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return kExitIo;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitInternal;
    }
    return kExitInternal;
}

} // namespace mdiqa
