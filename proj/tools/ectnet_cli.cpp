#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "ectnet/error.hpp"
#include "ectnet/parallel.hpp"
#include "ectnet/pipeline.hpp"

namespace fs = std::filesystem;
using namespace ectnet;

namespace {

struct Common {
    std::string config;
    std::optional<int> level;
    std::optional<int> resolution;
    std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c, bool with_grid) {
    cmd->add_option("--config", c.config, "JSON experiment config (defaults when omitted)");
    if (with_grid) {
        cmd->add_option("--level", c.level, "icosphere level override");
        cmd->add_option("--resolution", c.resolution, "Euler curve resolution t override");
    }
}

ExperimentConfig resolve(const Common& c) {
    ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : run_config(c.config);
    if (c.level) cfg.level = *c.level;
    if (c.resolution) cfg.t = *c.resolution;
    validate_config(cfg);
    return cfg;
}

fs::path loss_log_path(const fs::path& checkpoint) {
    auto p = checkpoint;
    p.replace_extension(".loss.csv");
    return p;
}

TrainResult train_and_save(const DatasetManifest& manifest, const ExperimentConfig& cfg, const fs::path& checkpoint) {
    const int every = std::max(1, cfg.train.epochs / 20);
    auto result = train_model(manifest, cfg, [&](const EpochLog& e) {
        if ((e.epoch + 1) % every == 0 || e.epoch + 1 == cfg.train.epochs) {
            std::cerr << "epoch " << e.epoch + 1 << "/" << cfg.train.epochs << " lr " << e.lr << " loss "
                      << e.train_loss << '\n';
        }
    });
    save_checkpoint(result.params, cfg.model, checkpoint);
    write_loss_log(result.log, loss_log_path(checkpoint));
    std::cout << "final_train_loss " << std::setprecision(17) << result.final_loss << '\n';
    return result;
}

}  // namespace

int main(int argc, char** argv) {
    configure_allocator();
    CLI::App app{"Euler curve transform shape embedding"};
    app.require_subcommand(1);

    Common synth_opts, pre_opts, train_opts, embed_opts, inv_opts;
    std::string out, manifest_path, checkpoint, mode;

    auto* synth = app.add_subcommand("synth", "generate the synthetic mesh dataset");
    add_common(synth, synth_opts, false);
    synth->add_option("--out", out, "output directory")->required();
    synth->add_option("--seed", synth_opts.seed, "deformation seed override");

    auto* pre = app.add_subcommand("preprocess", "compute Euler curve fields for every mesh");
    add_common(pre, pre_opts, true);
    pre->add_option("--manifest", manifest_path, "dataset manifest CSV")->required();

    auto* train = app.add_subcommand("train", "train the embedding model on the train split");
    add_common(train, train_opts, true);
    train->add_option("--manifest", manifest_path, "dataset manifest CSV")->required();
    train->add_option("--out", out, "checkpoint path; the loss log goes next to it")->required();
    train->add_option("--seed", train_opts.seed, "training seed override");

    auto* embed = app.add_subcommand("embed", "embed every manifest mesh into the plane");
    add_common(embed, embed_opts, true);
    embed->add_option("--manifest", manifest_path, "dataset manifest CSV")->required();
    embed->add_option("--checkpoint", checkpoint, "trained weights")->required();
    embed->add_option("--out", out, "embedding CSV")->required();

    auto* inv = app.add_subcommand("invariance", "isometry invariance error under random rigid motions");
    add_common(inv, inv_opts, true);
    inv->add_option("--manifest", manifest_path, "dataset manifest CSV")->required();
    inv->add_option("--checkpoint", checkpoint, "weights to reuse, or where retrained weights go");
    inv->add_option("--out", out, "per-mesh CSV")->required();
    inv->add_option("--seed", inv_opts.seed, "transform seed override");
    inv->add_option("--mode", mode, "reuse or retrain")->check(CLI::IsMember({"reuse", "retrain"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*synth) {
            auto cfg = resolve(synth_opts);
            if (synth_opts.seed) cfg.deform_seed = *synth_opts.seed;
            const auto m = synth_dataset(out, cfg);
            std::cout << "wrote " << m.entries.size() << " meshes and " << (fs::path(out) / "manifest.csv").string()
                      << '\n';
        } else if (*pre) {
            const auto cfg = resolve(pre_opts);
            const auto files = preprocess_ect(load_manifest(manifest_path), cfg);
            std::cout << "wrote " << files.size() << " fields to "
                      << (files.empty() ? std::string("-") : files.front().parent_path().string()) << '\n';
        } else if (*train) {
            auto cfg = resolve(train_opts);
            if (train_opts.seed) cfg.train.seed = *train_opts.seed;
            train_and_save(load_manifest(manifest_path), cfg, out);
        } else if (*embed) {
            const auto cfg = resolve(embed_opts);
            const auto params = load_checkpoint(fs::path(checkpoint), cfg.model);
            write_embeddings_csv(embed_meshes(load_manifest(manifest_path), params, cfg), out);
        } else if (*inv) {
            auto cfg = resolve(inv_opts);
            if (inv_opts.seed) cfg.invariance_seed = *inv_opts.seed;
            if (!mode.empty()) cfg.invariance_mode = mode == "retrain" ? InvarianceMode::Retrain : InvarianceMode::Reuse;
            const auto manifest = load_manifest(manifest_path);
            ModelParams params;
            if (cfg.invariance_mode == InvarianceMode::Retrain) {
                preprocess_ect(manifest, cfg);
                const fs::path target = checkpoint.empty() ? fs::path(out).replace_extension(".ectw") : fs::path(checkpoint);
                params = train_and_save(manifest, cfg, target).params;
            } else {
                if (checkpoint.empty()) throw ValidationError("checkpoint", "reuse mode needs --checkpoint");
                params = load_checkpoint(fs::path(checkpoint), cfg.model);
            }
            const auto result = invariance_error_analysis(manifest, params, cfg);
            write_invariance_csv(result, out);
            std::cout << "isometry_invariance_error " << std::setprecision(17) << result.error << '\n';
        }
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
