/*
 * Copyright (c) 2026, The aerotx Authors.  All rights reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "cli.hpp"

#include <algorithm>
#include <atomic>
#include <csignal>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "aerotx/dataset.hpp"
#include "aerotx/service/checkpoint.hpp"
#include "aerotx/service/service.hpp"
#include "aerotx/training.hpp"
#include "aerotx/version.hpp"

namespace aerotx::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::atomic<service::HttpServer*> g_server{nullptr};

void on_signal(int) {
    if (auto* s = g_server.load()) s->stop();
}

json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw FormatError(path.string() + " is not valid JSON");
    return j;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << text << '\n';
}

std::vector<std::size_t> all_indices(std::size_t n) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    return idx;
}

json resolution_json(const geometry::MeshResolution& r) { return json::array({r.chord_cells, r.span_cells}); }

training::LogSink make_log_sink(const std::string& path, std::ofstream& file) {
    if (!path.empty()) {
        file.open(path, std::ios::trunc);
        if (!file) throw Error("cannot write " + path);
    }
    return [&file](const json& entry) {
        spdlog::info("step {} loss {:.6g} lr {:.3g}", entry.value("step", 0), entry.value("loss", 0.0),
                     entry.value("lr", 0.0));
        if (file.is_open()) file << entry.dump() << '\n' << std::flush;
    };
}

struct TrainOverrides {
    std::optional<std::size_t> steps;
    std::optional<std::size_t> batch;
    std::optional<double> lr;
    std::optional<double> lambda;
    std::optional<std::uint64_t> seed;
};

void apply(const TrainOverrides& o, training::TrainConfig& cfg) {
    if (o.steps) cfg.total_steps = *o.steps;
    if (o.batch) cfg.batch_size = *o.batch;
    if (o.lr) cfg.lr_max = *o.lr;
    if (o.lambda) cfg.lambda_coef = *o.lambda;
    if (o.seed) cfg.seed = *o.seed;
}

void add_train_overrides(CLI::App* cmd, TrainOverrides& o) {
    cmd->add_option("--steps", o.steps, "Optimizer steps");
    cmd->add_option("--batch", o.batch, "Batch size");
    cmd->add_option("--lr", o.lr, "Peak learning rate");
    cmd->add_option("--lambda", o.lambda, "Weight of the coefficient loss");
    cmd->add_option("--seed", o.seed, "Random seed");
}

json provenance_for(const training::TrainConfig& cfg, const training::TrainResult& r,
                    const dataset::DatasetManifest& m, const std::string& data_dir) {
    return {{"seed", cfg.seed},
            {"steps", r.steps},
            {"lambda", cfg.lambda_coef},
            {"strategy", training::to_string(cfg.strategy)},
            {"lr_max", cfg.lr_max},
            {"batch_size", cfg.batch_size},
            {"final_loss", r.final_loss},
            {"train_seconds", r.seconds},
            {"resolution", resolution_json(m.resolution)},
            {"dataset", data_dir},
            {"dataset_seed", m.seed},
            {"dataset_kind", dataset::to_string(m.kind)}};
}

// Trains and saves; on divergence saves the last good parameters and rethrows.
template <typename T>
void run_training(model::Model<T>& model, const training::TrainingSet& set, const training::TrainConfig& cfg,
                  const dataset::DatasetManifest& manifest, const std::string& data_dir, const std::string& out_path,
                  const std::string& log_path, std::ostream& out) {
    std::ofstream log_file;
    const auto sink = make_log_sink(log_path, log_file);
    try {
        const auto result = training::train(model, set, cfg, sink);
        service::save_checkpoint(out_path, model, provenance_for(cfg, result, manifest, data_dir));
        out << json{{"checkpoint", out_path},
                    {"steps", result.steps},
                    {"final_loss", result.final_loss},
                    {"seconds", result.seconds},
                    {"parameters", model.param_count()},
                    {"trainable", model.param_count(true)}}
                   .dump()
            << '\n';
    } catch (const training::TrainingDiverged& e) {
        training::TrainResult partial;
        partial.steps = e.step();
        json prov = provenance_for(cfg, partial, manifest, data_dir);
        prov["diverged_at"] = e.step();
        service::save_checkpoint(out_path, model, prov);
        spdlog::error("training diverged at step {}; last good parameters saved to {}", e.step(), out_path);
        throw;
    }
}

struct Options {
    // gen-data
    std::string kind = "pretrain";
    std::size_t shapes = 0;
    std::string out;
    std::uint64_t seed = 0;
    std::size_t workers = 1;
    std::size_t chord_cells = 256;
    std::size_t span_cells = 128;
    // train / finetune
    std::string data;
    std::string config;
    std::string base;
    std::string strategy;
    std::size_t rank = 4;
    bool merge = false;
    std::string precision = "f32";
    std::string log;
    TrainOverrides overrides;
    // eval
    std::string ckpt;
    std::size_t folds = 1;
    std::string predictor = "model";
    std::size_t batch = 16;
    // pca
    std::vector<double> thresholds{0.99, 0.999};
    // predict
    std::string geometry;
    double mach = 0.85;
    double aoa = 2.0;
    // serve
    int port = 8080;
    std::string host = "127.0.0.1";
    bool expose = false;
};

int cmd_gen_data(const Options& o, std::ostream& out) {
    auto space = o.kind == "pretrain" ? dataset::DesignSpace::pretrain_like() : dataset::DesignSpace::finetune_like();
    space.resolution = {o.chord_cells, o.span_cells};
    const auto m = dataset::generate_dataset(space, o.shapes, o.out, o.seed, o.workers);
    out << json{{"out", o.out}, {"kind", o.kind}, {"shapes", m.shapes}, {"samples", m.count}, {"seed", m.seed}}.dump()
        << '\n';
    return kExitOk;
}

template <typename T>
int cmd_train(const Options& o, std::ostream& out) {
    const json file = o.config.empty() ? json::object() : read_json_file(o.config);
    model::ModelConfig mcfg = model::ModelConfig::small();
    if (file.contains("preset")) {
        const auto preset = file["preset"].get<std::string>();
        if (preset == "small") mcfg = model::ModelConfig::small();
        else if (preset == "medium") mcfg = model::ModelConfig::medium();
        else if (preset == "large") mcfg = model::ModelConfig::large();
        else throw ConfigError("unknown preset '" + preset + "' (small, medium, large)");
    }
    if (file.contains("model")) mcfg = file["model"].get<model::ModelConfig>();
    training::TrainConfig cfg = file.contains("train") ? file["train"].get<training::TrainConfig>()
                                                       : training::TrainConfig::pretrain_defaults();
    cfg.strategy = training::Strategy::pretrain;
    apply(o.overrides, cfg);

    const auto data = dataset::load_dataset(o.data);
    const auto idx = all_indices(data.records.size());
    model::Model<T> model(mcfg, cfg.seed);
    model.set_standardization(dataset::compute_standardization(data.records, idx));
    const training::TrainingSet set(data, idx);
    run_training(model, set, cfg, data.manifest, o.data, o.out, o.log, out);
    return kExitOk;
}

template <typename T>
int cmd_finetune(const Options& o, std::ostream& out) {
    const json file = o.config.empty() ? json::object() : read_json_file(o.config);
    json train_json = file.value("train", json::object());
    train_json["strategy"] = o.strategy;
    training::TrainConfig cfg = train_json.get<training::TrainConfig>();
    cfg.lora_rank = o.rank;
    apply(o.overrides, cfg);

    auto model = service::load_checkpoint<T>(o.base);
    const auto data = dataset::load_dataset(o.data);
    const training::TrainingSet set(data, all_indices(data.records.size()));
    run_training(model, set, cfg, data.manifest, o.data, o.out, o.log, out);
    if (o.merge && model.has_lora()) {
        json prov;
        auto reloaded = service::load_checkpoint<T>(o.out, &prov);
        reloaded.merge_lora();
        prov["lora_merged"] = true;
        service::save_checkpoint(o.out, reloaded, prov);
    }
    return kExitOk;
}

std::map<std::string, double> metric_map(const training::Evaluation& e) {
    return {{"d_cp", e.flow.d_cp},     {"d_cf_tau", e.flow.d_cf_tau}, {"d_cf_z", e.flow.d_cf_z},
            {"sfe", e.flow.sfe},       {"d_cl", e.coef.d_cl},         {"d_cd", e.coef.d_cd},
            {"d_cmz", e.coef.d_cmz},   {"samples", double(e.samples)}};
}

int cmd_eval(const Options& o, std::ostream& out) {
    if (o.predictor != "model" && o.predictor != "copy") throw ConfigError("--predictor must be model or copy");
    const auto data = dataset::load_dataset(o.data);
    std::optional<model::Model<float>> model;
    if (o.predictor == "model") {
        if (o.ckpt.empty()) throw ConfigError("--ckpt is required with --predictor model");
        model = service::load_checkpoint<float>(o.ckpt);
    }
    auto runner = [&](std::span<const std::size_t>, std::span<const std::size_t> test) {
        const std::vector<std::size_t> idx(test.begin(), test.end());
        if (model) return metric_map(training::evaluate(*model, training::TrainingSet(data, idx), o.batch));
        std::vector<aero::SurfaceFlow> flows;
        for (auto i : idx) flows.push_back(data.records[i].surface_flow());
        training::Evaluation e;
        e.flow = aero::field_error(flows, flows);
        e.samples = idx.size();
        return metric_map(e);
    };
    json report;
    if (o.folds <= 1) {
        const auto m = runner({}, all_indices(data.records.size()));
        report = {{"folds", 1}, {"metrics", m}, {"mean", m}};
    } else {
        const auto cv =
            training::cross_validate(data.records, o.folds, o.seed, dataset::Granularity::by_shape, runner);
        report = {{"folds", o.folds}, {"fold_metrics", cv.folds}, {"mean", cv.mean}, {"std", cv.stddev}};
    }
    out << report.dump(2) << '\n';
    return kExitOk;
}

int cmd_pca(const Options& o, std::ostream& out) {
    const auto data = dataset::load_dataset(o.data);
    const auto r = dataset::pca_modes(data, o.thresholds);
    json modes = json::object();
    for (std::size_t i = 0; i < r.thresholds.size(); ++i) {
        std::ostringstream key;
        key << r.thresholds[i];
        modes[key.str()] = r.modes[i];
    }
    const std::size_t head = std::min<std::size_t>(r.cumulative.size(), 32);
    out << json{{"samples", r.samples},
                {"dims", r.dims},
                {"degenerate", r.degenerate},
                {"modes", modes},
                {"cumulative", std::vector<double>(r.cumulative.begin(), r.cumulative.begin() + head)}}
               .dump(2)
        << '\n';
    return kExitOk;
}

service::PredictionService load_service(const std::string& ckpt) {
    json provenance;
    auto model = service::load_checkpoint<float>(ckpt, &provenance);
    return service::PredictionService(std::move(model), provenance);
}

int cmd_predict(const Options& o, std::ostream& out, std::ostream& err) {
    const auto svc = load_service(o.ckpt);
    const json request{{"geometry", read_json_file(o.geometry)},
                       {"conditions", json::array({{{"mach", o.mach}, {"aoa_deg", o.aoa}}})}};
    const auto r = svc.predict(request.dump());
    if (r.status != 200) {
        err << r.body.dump(2) << '\n';
        return kExitRuntime;
    }
    write_text(o.out, r.body.dump());
    out << json{{"out", o.out}, {"coefficients", r.body["coefficients"][0]}, {"timing_ms", r.body["timing_ms"]}}
               .dump()
        << '\n';
    return kExitOk;
}

int cmd_serve(const Options& o, std::ostream& out) {
    const auto svc = load_service(o.ckpt);
    service::HttpServer server(svc);
    const std::string host = o.expose ? "0.0.0.0" : o.host;
    const int port = server.bind(host, o.port);
    out << "listening on http://" << host << ':' << port << '\n' << std::flush;
    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    server.run();
    g_server = nullptr;
    return kExitOk;
}

std::vector<std::string> long_names(const CLI::App* app) {
    std::vector<std::string> names;
    for (const CLI::Option* opt : app->get_options())
        for (const auto& n : opt->get_lnames()) names.push_back("--" + n);
    return names;
}

// Suggestion for the first unknown flag of the selected subcommand.
std::string unknown_flag_hint(const CLI::App& app, const std::vector<std::string>& args) {
    const CLI::App* sub = &app;
    for (const auto& a : args) {
        if (a.rfind("-", 0) == 0) continue;
        for (const CLI::App* s : app.get_subcommands({}))
            if (s->get_name() == a) sub = s;
        if (sub != &app) break;
    }
    const auto names = long_names(sub);
    for (const auto& a : args) {
        if (a.rfind("--", 0) != 0) continue;
        const std::string flag = a.substr(0, a.find('='));
        if (std::find(names.begin(), names.end(), flag) != names.end()) continue;
        const std::string best = suggest(flag, names);
        if (!best.empty()) return "unknown flag " + flag + "; did you mean " + best + "?";
    }
    return {};
}

}  // namespace

std::string suggest(const std::string& word, const std::vector<std::string>& candidates) {
    auto distance = [](const std::string& a, const std::string& b) {
        std::vector<std::size_t> row(b.size() + 1);
        for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
        for (std::size_t i = 1; i <= a.size(); ++i) {
            std::size_t diag = row[0];
            row[0] = i;
            for (std::size_t j = 1; j <= b.size(); ++j) {
                const std::size_t up = row[j];
                row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
                diag = up;
            }
        }
        return row[b.size()];
    };
    std::string best;
    std::size_t best_d = std::max<std::size_t>(3, word.size() / 3) + 1;
    for (const auto& c : candidates) {
        const std::size_t d = distance(word, c);
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    return best;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    service::configure_logging();
    CLI::App app{"Surface-flow surrogate for transonic wings: data generation, training and serving", "aerotx"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kVersion));
    Options o;

    auto* gen = app.add_subcommand("gen-data", "Sample wings and write oracle flow samples");
    gen->add_option("--kind", o.kind, "Design space")->check(CLI::IsMember({"pretrain", "finetune"}));
    gen->add_option("--shapes", o.shapes, "Number of wing shapes (8 conditions each)")->required();
    gen->add_option("--out", o.out, "Output directory")->required();
    gen->add_option("--seed", o.seed, "Random seed");
    gen->add_option("--workers", o.workers, "Worker threads")->check(CLI::PositiveNumber);
    gen->add_option("--chord-cells", o.chord_cells, "Mesh cells around the section");
    gen->add_option("--span-cells", o.span_cells, "Mesh cells along the span");

    auto* train = app.add_subcommand("train", "Train a model from scratch");
    train->add_option("--data", o.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    train->add_option("--config", o.config, "JSON file with \"preset\" or \"model\", and \"train\"")
        ->check(CLI::ExistingFile);
    train->add_option("--out", o.out, "Checkpoint path")->required();
    train->add_option("--precision", o.precision, "Training precision")->check(CLI::IsMember({"f32", "f64"}));
    train->add_option("--log", o.log, "JSONL training log");
    add_train_overrides(train, o.overrides);

    auto* ft = app.add_subcommand("finetune", "Fine-tune a checkpoint on a dataset");
    ft->add_option("--base", o.base, "Pre-trained checkpoint")->required()->check(CLI::ExistingFile);
    ft->add_option("--data", o.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    ft->add_option("--strategy", o.strategy, "Trainable subset")
        ->required()
        ->check(CLI::IsMember({"full", "attn", "lora"}));
    ft->add_option("--rank", o.rank, "LoRA rank")->check(CLI::PositiveNumber);
    ft->add_option("--config", o.config, "JSON file with a \"train\" object")->check(CLI::ExistingFile);
    ft->add_option("--out", o.out, "Checkpoint path")->required();
    ft->add_flag("--merge", o.merge, "Fold LoRA adapters into the base weights before saving");
    ft->add_option("--precision", o.precision, "Training precision")->check(CLI::IsMember({"f32", "f64"}));
    ft->add_option("--log", o.log, "JSONL training log");
    add_train_overrides(ft, o.overrides);

    auto* ev = app.add_subcommand("eval", "Field and coefficient errors on a dataset, as JSON");
    ev->add_option("--ckpt", o.ckpt, "Checkpoint")->check(CLI::ExistingFile);
    ev->add_option("--data", o.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    ev->add_option("--folds", o.folds, "Number of shape-wise folds")->check(CLI::PositiveNumber);
    ev->add_option("--seed", o.seed, "Fold assignment seed");
    ev->add_option("--batch", o.batch, "Inference batch size")->check(CLI::PositiveNumber);
    ev->add_option("--predictor", o.predictor, "model, or copy to score the stored truths against themselves")
        ->check(CLI::IsMember({"model", "copy"}));

    auto* pca = app.add_subcommand("pca", "Principal modes of the mesh coordinates of a dataset");
    pca->add_option("--data", o.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    pca->add_option("--thresholds", o.thresholds, "Explained-variance thresholds");

    auto* pred = app.add_subcommand("predict", "Predict surface fields for one wing and condition");
    pred->add_option("--ckpt", o.ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
    pred->add_option("--geometry", o.geometry, "Wing JSON")->required()->check(CLI::ExistingFile);
    pred->add_option("--mach", o.mach, "Mach number");
    pred->add_option("--aoa", o.aoa, "Angle of attack, degrees");
    pred->add_option("--out", o.out, "Response JSON path")->required();

    auto* serve = app.add_subcommand("serve", "HTTP inference service");
    serve->add_option("--ckpt", o.ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
    serve->add_option("--port", o.port, "TCP port (0 picks a free one)");
    serve->add_option("--host", o.host, "Bind address");
    serve->add_flag("--expose", o.expose, "Bind all interfaces (no authentication)");

    std::vector<const char*> argv{"aerotx"};
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::CallForVersion&) {
        out << kVersion << '\n';
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        if (const auto hint = unknown_flag_hint(app, args); !hint.empty()) err << hint << '\n';
        err << "run with --help for usage\n";
        return kExitUsage;
    }

    try {
        const bool f64 = o.precision == "f64";
        if (gen->parsed()) return cmd_gen_data(o, out);
        if (train->parsed()) return f64 ? cmd_train<double>(o, out) : cmd_train<float>(o, out);
        if (ft->parsed()) return f64 ? cmd_finetune<double>(o, out) : cmd_finetune<float>(o, out);
        if (ev->parsed()) return cmd_eval(o, out);
        if (pca->parsed()) return cmd_pca(o, out);
        if (pred->parsed()) return cmd_predict(o, out, err);
        if (serve->parsed()) return cmd_serve(o, out);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitUsage;
}

}  // namespace aerotx::cli
