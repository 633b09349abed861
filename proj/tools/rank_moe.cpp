#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "rankmoe/checkpoint.hpp"
#include "rankmoe/eval.hpp"
#include "rankmoe/log.hpp"
#include "rankmoe/service.hpp"
#include "rankmoe/synthgen.hpp"
#include "rankmoe/trainer.hpp"

namespace fs = std::filesystem;
using namespace rankmoe;

namespace {

struct CliArgs {
    std::string config_path;
    long long seed = -1;
    long long steps = -1;
    std::string checkpoint;
    std::string out;
    std::string listen = "127.0.0.1:0";
    bool no_timestamp = false;
};

Config load_config(const CliArgs& a, bool for_generate) {
    Config c;
    config_load_file(c, a.config_path);
    if (a.seed >= 0) {
        if (for_generate)
            c.gen.gen_seed = a.seed;
        else
            c.train.seed = a.seed;
    }
    if (a.steps >= 0) c.train.max_steps = a.steps;
    if (!a.checkpoint.empty()) c.train.checkpoint = a.checkpoint;
    config_validate(c);
    return c;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("cannot write " + path);
    out << text;
    if (!out) throw data_error("write failed: " + path);
}

int cmd_generate(const CliArgs& a) {
    Config c = load_config(a, /*for_generate=*/true);
    std::string dir = a.out.empty() ? c.train.data_dir : a.out;
    LatentWorld world = generate_dataset(c.gen, dir);
    log_info("generated " + std::to_string(world.train_records) + " train and " +
             std::to_string(world.test_records) + " test records in " + dir);
    return 0;
}

int cmd_train(const CliArgs& a) {
    Config c = load_config(a, false);
    std::vector<InteractionRecord> train = read_jsonl(c.train.data_dir + "/train.jsonl");
    std::vector<InteractionRecord> test;
    std::string test_path = c.train.data_dir + "/test.jsonl";
    if (fs::exists(test_path)) test = read_jsonl(test_path);
    log_info("training on " + std::to_string(train.size()) + " records, " +
             std::to_string(c.train.max_steps) + " steps, ablation " +
             ablation_name(c.train.ablation));

    Model<float> model(c);
    TrainLog log = train_model(model, train, test.empty() ? nullptr : &test);

    std::string loss_path = a.out.empty() ? "loss.csv" : a.out;
    write_text(loss_path, log.csv());
    save_checkpoint(model.params(), config_digest(c), c.train.checkpoint);
    model.vocabs().save_file(vocab_sidecar_path(c.train.checkpoint));
    log_info("final loss " + detail::fmt_double(log.rows.back().total) + " after " +
             std::to_string(log.steps) + " steps (" + std::to_string(log.epochs) + " epochs)");
    log_info("wrote " + c.train.checkpoint + " and " + loss_path);
    return 0;
}

// Builds the model for an existing checkpoint, refusing on digest mismatch
// before any parameter I/O happens.
std::unique_ptr<Model<float>> load_trained(const Config& c) {
    auto want = config_digest(c);
    auto have = checkpoint_digest(c.train.checkpoint);
    if (want != have)
        throw checkpoint_error("config digest mismatch: checkpoint " + c.train.checkpoint +
                               " has " + digest_hex(have) + ", current config needs " +
                               digest_hex(want));
    auto model = std::make_unique<Model<float>>(c);
    load_checkpoint(c.train.checkpoint, model->params(), want);
    model->vocabs() = VocabSet::load_file(vocab_sidecar_path(c.train.checkpoint));
    return model;
}

int cmd_eval(const CliArgs& a) {
    Config c = load_config(a, false);
    auto model = load_trained(c);
    std::vector<InteractionRecord> test = read_jsonl(c.train.data_dir + "/test.jsonl");
    log_info("evaluating " + std::to_string(test.size()) + " records");
    EvalReport rep = evaluate(*model, test);
    std::string csv = report_csv(rep);
    if (a.out.empty()) {
        std::fputs(csv.c_str(), stdout);
    } else {
        write_text(a.out, csv);
        log_info("wrote " + a.out);
    }
    return 0;
}

int cmd_describe(const CliArgs& a) {
    Config c = load_config(a, false);
    Model<float> model(c);
    auto& ps = model.params();
    std::string out;
    out += "config digest: " + digest_hex(config_digest(c)) + "\n";
    out += "ablation: " + std::string(ablation_name(c.train.ablation)) + "\n";
    out += "parameters: " + std::to_string(ps.total_params()) + " total in " +
           std::to_string(ps.size()) + " tensors\n";
    for (const auto& e : ps.entries())
        out += "  " + e.name + "  " + shape_str(e.tensor->rows, e.tensor->cols) + "  " +
               std::to_string(e.tensor->numel()) + "\n";
    std::fputs(out.c_str(), stdout);
    return 0;
}

struct AblateRow {
    std::string variant;
    long long seed;
    std::optional<double> auc_ctr, auc_cvr;
};

AblateRow run_variant(const Config& base, const std::string& label, long long seed,
                      const GenOutput& data) {
    Config c = base;
    c.train.seed = seed;
    Model<float> model(c);
    train_model(model, data.train);
    EvalReport rep = evaluate(model, data.test);
    log_info("ablate " + label + " seed " + std::to_string(seed) + " auc_ctr " +
             (rep.ctr.auc ? detail::fmt_double(*rep.ctr.auc) : "n/a"));
    return {label, seed, rep.ctr.auc, rep.cvr.auc};
}

int cmd_ablate(const CliArgs& a) {
    Config c = load_config(a, false);
    log_info("generating ablation dataset (" + std::to_string(c.gen.n_sessions) + " sessions)");
    LatentWorld world = LatentWorld::build(c.gen);
    GenOutput data = generate(world);

    std::vector<std::pair<std::string, Config>> variants;
    for (Ablation ab : {Ablation::full, Ablation::no_jd, Ablation::no_jd_no_mtl,
                        Ablation::no_jd_no_mtl_no_pmmoe, Ablation::no_llm_summary}) {
        Config v = c;
        v.train.ablation = ab;
        variants.emplace_back(ablation_name(ab), v);
    }
    for (int n : c.train.ablate_expert_counts) {
        Config v = c;
        v.train.ablation = Ablation::full;
        v.train.n_experts = n;
        variants.emplace_back("experts_" + std::to_string(n), v);
    }
    for (int h : c.train.ablate_history_lengths) {
        Config v = c;
        v.train.ablation = Ablation::full;
        v.train.max_history = h;
        variants.emplace_back("history_" + std::to_string(h), v);
    }

    std::string csv = "variant,seed,auc_ctr,auc_cvr,auc_avg\n";
    for (const auto& [label, vc] : variants) {
        for (int s = 0; s < vc.train.ablate_seeds; ++s) {
            AblateRow row = run_variant(vc, label, vc.train.seed + s, data);
            csv += row.variant + "," + std::to_string(row.seed) + ",";
            csv += row.auc_ctr ? detail::fmt_double(*row.auc_ctr) : "";
            csv += ",";
            csv += row.auc_cvr ? detail::fmt_double(*row.auc_cvr) : "";
            csv += ",";
            if (row.auc_ctr && row.auc_cvr)
                csv += detail::fmt_double((*row.auc_ctr + *row.auc_cvr) / 2.0);
            else if (row.auc_ctr)
                csv += detail::fmt_double(*row.auc_ctr);
            csv += "\n";
        }
    }
    std::string path = a.out.empty() ? "ablate.csv" : a.out;
    write_text(path, csv);
    log_info("wrote " + path);
    return 0;
}

int cmd_serve(const CliArgs& a) {
    Config c = load_config(a, false);
    auto model = load_trained(c);

    auto colon = a.listen.rfind(':');
    if (colon == std::string::npos)
        throw usage_error("--listen expects HOST:PORT, got '" + a.listen + "'");
    std::string host = a.listen.substr(0, colon);
    int port = detail::parse_int(a.listen.substr(colon + 1), "--listen port");
    if (port < 0 || port > 65535) throw usage_error("--listen port out of range");

    const Model<float>* m = model.get();
    LineServer server(host, port, [m](const std::string& line) {
        return handle_rank_line(*m, line);
    });
    int bound = server.start();
    // Machine-readable readiness line; tests and callers key off it.
    std::printf("LISTENING %s:%d\n", host.c_str(), bound);
    std::fflush(stdout);
    log_info("serving; one JSON request per line");
    server.wait();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"talent search ranking: data generation, training, evaluation, serving"};
    app.require_subcommand(1);
    app.fallthrough();

    CliArgs args;
    app.add_option("--config", args.config_path, "config file (key = value lines)")->required();
    app.add_option("--seed", args.seed, "override seed (generator seed for generate)");
    app.add_option("--steps", args.steps, "override training step count");
    app.add_option("--checkpoint", args.checkpoint, "checkpoint path");
    app.add_option("--out", args.out, "output path (command-specific)");
    app.add_option("--listen", args.listen, "serve address HOST:PORT (port 0 picks one)");
    app.add_flag("--no-timestamp", args.no_timestamp, "plain log lines without timestamps");

    auto* c_gen = app.add_subcommand("generate", "write synthetic train/test data");
    auto* c_train = app.add_subcommand("train", "train a model and write a checkpoint");
    auto* c_eval = app.add_subcommand("eval", "score a test file against a checkpoint");
    auto* c_ablate = app.add_subcommand("ablate", "train ablation variants and sweeps");
    auto* c_desc = app.add_subcommand("describe", "print model shapes and config digest");
    auto* c_serve = app.add_subcommand("serve", "run the re-ranking line service");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }
    if (args.no_timestamp) Logger::instance().timestamps = false;

    try {
        if (c_gen->parsed()) return cmd_generate(args);
        if (c_train->parsed()) return cmd_train(args);
        if (c_eval->parsed()) return cmd_eval(args);
        if (c_ablate->parsed()) return cmd_ablate(args);
        if (c_desc->parsed()) return cmd_describe(args);
        if (c_serve->parsed()) return cmd_serve(args);
        throw usage_error("no subcommand selected");
    } catch (const usage_error& e) {
        log_error(e.what());
        return 1;
    } catch (const data_error& e) {
        log_error(e.what());
        return 2;
    } catch (const checkpoint_error& e) {
        log_error(e.what());
        return 3;
    } catch (const error& e) {
        log_error(e.what());
        return 1;
    } catch (const std::exception& e) {
        log_error(e.what());
        return 1;
    }
}
