#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ltd/ltd.hpp"

namespace fs = std::filesystem;
using ltd::json;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open " + path);
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json read_json(const std::string& path) { return json::parse(read_file(path)); }

// Writes to `path`, or stdout when it is empty or "-".
void write_text(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write " + path);
    }
    out << text;
}

// One address per line (# comments allowed) or a JSON array of addresses.
std::set<ltd::address_t> read_targets(const std::string& path) {
    auto text = read_file(path);
    std::set<ltd::address_t> out;
    auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '[') {
        for (const auto& a : json::parse(text)) {
            out.insert(a.get<ltd::address_t>());
        }
        return out;
    }
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos) continue;
        auto e = line.find_last_not_of(" \t\r");
        out.insert(ltd::address_t::parse(line.substr(b, e - b + 1)));
    }
    return out;
}

struct backend_args_t {
    std::string backend = "sim:topology.json";
    std::string source;
    bool acknowledge = false;
    std::string emission_log;

    void add(CLI::App* app) {
        app->add_option("--backend", backend, "sim:<topology.json> or real")->capture_default_str();
        app->add_option("--source", source, "source address for the real backend");
        app->add_flag("--i-understand-impact", acknowledge, "acknowledge that the real backend probes live routers");
        app->add_option("--emission-log", emission_log, "write the per-probe emission log (JSONL)");
    }

    std::unique_ptr<ltd::probe_engine_t> make() const {
        ltd::engine_options_t eo;
        eo.keep_emission_log = !emission_log.empty();
        eo.log_outcomes = eo.keep_emission_log;
        if (backend.rfind("sim:", 0) == 0) {
            auto topo = read_json(backend.substr(4)).get<ltd::netsim::sim_topology_t>();
            return std::make_unique<ltd::netsim::sim_engine_t>(std::move(topo), eo);
        }
        if (backend == "real") {
            ltd::real::raw_options_t ro;
            ro.i_understand_impact = acknowledge;
            if (!source.empty()) {
                ro.source = ltd::address_t::parse(source);
                ro.source_set = true;
            }
            return std::make_unique<ltd::real::raw_engine_t>(ro, eo);
        }
        throw std::invalid_argument("unknown backend " + backend);
    }

    void flush_log(const ltd::probe_engine_t& engine) const {
        if (emission_log.empty()) return;
        std::ofstream out(emission_log);
        engine.emission_log().write_jsonl(out);
    }
};

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Alias resolution through shared ICMP rate limiting"};
    app.require_subcommand(1);

    // find-rate
    auto* find_rate = app.add_subcommand("find-rate", "discover the probing rate that triggers rate limiting");
    std::string fr_target, fr_config;
    backend_args_t fr_backend;
    find_rate->add_option("--target", fr_target, "target address")->required();
    find_rate->add_option("--config", fr_config, "resolver configuration JSON");
    fr_backend.add(find_rate);

    // signatures
    auto* sigs = app.add_subcommand("signatures", "probe a seed against candidates and dump signatures (JSONL)");
    std::string sg_seed, sg_candidates, sg_config, sg_output;
    ltd::rate_t sg_rate = 0;
    bool sg_keep = false;
    backend_args_t sg_backend;
    sigs->add_option("--seed-address", sg_seed, "seed address")->required();
    sigs->add_option("--rate", sg_rate, "seed probing rate; found with find-rate when omitted");
    sigs->add_option("--candidates", sg_candidates, "candidate address file")->required();
    sigs->add_option("--config", sg_config, "resolver configuration JSON");
    sigs->add_option("--output", sg_output, "output file (default stdout)");
    sigs->add_flag("--keep-traces", sg_keep, "retain raw loss traces in each signature");
    sg_backend.add(sigs);

    // resolve
    auto* resolve = app.add_subcommand("resolve", "partition a set of addresses into alias sets");
    std::string rs_targets, rs_model, rs_config, rs_output, rs_report;
    std::uint64_t rs_seed = 1;
    backend_args_t rs_backend;
    resolve->add_option("--targets", rs_targets, "address file")->required();
    resolve->add_option("--model", rs_model, "trained model JSON")->required();
    resolve->add_option("--config", rs_config, "resolver configuration JSON");
    resolve->add_option("--seed", rs_seed, "seed for seed selection and batching order")->capture_default_str();
    resolve->add_option("--output", rs_output, "partition output (default stdout)");
    resolve->add_option("--report", rs_report, "run report output");
    rs_backend.add(resolve);

    // train
    auto* train = app.add_subcommand("train", "train the alias classifier from a labeled dataset");
    std::string tr_dataset, tr_output;
    std::uint64_t tr_seed = 1;
    std::size_t tr_trees = 500;
    unsigned tr_threads = 0;
    train->add_option("--dataset", tr_dataset, "labeled pairs (JSONL)")->required();
    train->add_option("--output", tr_output, "model output (default stdout)");
    train->add_option("--seed", tr_seed)->capture_default_str();
    train->add_option("--trees", tr_trees)->capture_default_str();
    train->add_option("--threads", tr_threads, "0 = all cores")->capture_default_str();

    // predict
    auto* predict = app.add_subcommand("predict", "classify signatures");
    std::string pr_model, pr_signatures;
    predict->add_option("--model", pr_model)->required();
    predict->add_option("--signatures", pr_signatures, "signatures (JSONL)")->required();

    // importance
    auto* importance = app.add_subcommand("importance", "rank features by Gini importance");
    std::string im_model;
    importance->add_option("--model", im_model)->required();

    // cross-validate
    auto* cv = app.add_subcommand("cross-validate", "mean held-out scores over repeated random splits");
    std::string cv_dataset;
    std::size_t cv_splits = 10, cv_trees = 500;
    double cv_fraction = 0.5;
    std::uint64_t cv_seed = 1;
    cv->add_option("--dataset", cv_dataset)->required();
    cv->add_option("--splits", cv_splits)->capture_default_str();
    cv->add_option("--train-fraction", cv_fraction)->capture_default_str();
    cv->add_option("--trees", cv_trees)->capture_default_str();
    cv->add_option("--seed", cv_seed)->capture_default_str();

    // eval
    auto* eval = app.add_subcommand("eval", "pairwise precision and recall against ground truth");
    std::string ev_pred, ev_truth, ev_unresponsive;
    bool ev_keep_unresponsive = false;
    eval->add_option("--predicted", ev_pred)->required();
    eval->add_option("--truth", ev_truth)->required();
    eval->add_option("--unresponsive", ev_unresponsive, "addresses to drop before scoring");
    eval->add_flag("--keep-unresponsive", ev_keep_unresponsive, "score unresponsive addresses too");

    // closure
    auto* closure = app.add_subcommand("closure", "transitive closure of several partitions");
    std::vector<std::string> cl_inputs;
    closure->add_option("--inputs", cl_inputs)->required()->expected(1, -1);

    // stats
    auto* stats = app.add_subcommand("stats", "campaign statistics from run reports");
    std::string st_dir;
    stats->add_option("--reports", st_dir, "directory of run report JSON files")->required();

    // gen-topology
    auto* gen_topo = app.add_subcommand("gen-topology", "generate a simulated topology");
    std::string gt_spec, gt_output;
    std::uint64_t gt_seed = 1;
    gen_topo->add_option("--spec", gt_spec, "topology spec JSON (defaults when omitted)");
    gen_topo->add_option("--seed", gt_seed)->capture_default_str();
    gen_topo->add_option("--output", gt_output);

    // gen-dataset
    auto* gen_data = app.add_subcommand("gen-dataset", "generate labeled pairs from simulated topologies");
    std::string gd_spec, gd_output;
    std::uint64_t gd_seed = 1;
    gen_data->add_option("--spec", gd_spec, "dataset spec JSON (defaults when omitted)");
    gen_data->add_option("--seed", gd_seed)->capture_default_str();
    gen_data->add_option("--output", gd_output);

    // truth
    auto* truth = app.add_subcommand("truth", "ground-truth partition of a simulated topology");
    std::string tt_topology;
    truth->add_option("--topology", tt_topology)->required();

    // simulate
    auto* simulate = app.add_subcommand("simulate", "run one probing round against a simulated topology");
    std::string sm_topology, sm_tasks, sm_log;
    simulate->add_option("--topology", sm_topology)->required();
    simulate->add_option("--tasks", sm_tasks, "JSON array of {target, rate, duration}")->required();
    simulate->add_option("--emission-log", sm_log, "write the event log (JSONL)");

    CLI11_PARSE(app, argc, argv);

    try {
        auto load_config = [](const std::string& path) {
            return path.empty() ? ltd::resolver_config_t{} : read_json(path).get<ltd::resolver_config_t>();
        };

        if (*find_rate) {
            auto cfg = load_config(fr_config);
            auto engine = fr_backend.make();
            auto target = ltd::address_t::parse(fr_target);
            auto ev = ltd::find_rate(target, *engine, cfg.policy, cfg.rate, ltd::flow_id_for(target));
            fr_backend.flush_log(*engine);
            std::cout << json(ev).dump(2) << '\n';
        } else if (*sigs) {
            auto cfg = load_config(sg_config);
            cfg.signature.keep_traces = cfg.signature.keep_traces || sg_keep;
            auto engine = sg_backend.make();
            auto seed = ltd::address_t::parse(sg_seed);
            auto cand = read_targets(sg_candidates);
            cand.erase(seed);
            std::set<ltd::address_t> all = cand;
            all.insert(seed);
            auto k = ltd::controls(all, *engine);
            ltd::rate_t rate = sg_rate;
            if (rate == 0) {
                auto ev = ltd::find_rate(seed, *engine, cfg.policy, cfg.rate, ltd::detail::flow_of(k, seed));
                if (ev.status == ltd::rate_search_status_t::failed) {
                    throw std::runtime_error("rate search failed for " + seed.str());
                }
                rate = ev.r_s;
            }
            std::vector<ltd::address_t> cv_list(cand.begin(), cand.end());
            auto res = ltd::signatures(seed, rate, cv_list, k, *engine, cfg.policy, cfg.signature);
            std::ostringstream os;
            ltd::write_signatures_jsonl(os, res.signatures);
            write_text(sg_output, os.str());
            sg_backend.flush_log(*engine);
            if (res.partial) {
                std::cerr << "warning: " << res.abandoned.size() << " candidates abandoned after engine failures\n";
            }
        } else if (*resolve) {
            auto cfg = load_config(rs_config);
            auto model = read_json(rs_model).get<ltd::model_t>();
            auto targets = read_targets(rs_targets);
            auto engine = rs_backend.make();
            try {
                auto res = ltd::resolve(targets, model, *engine, cfg, rs_seed);
                rs_backend.flush_log(*engine);
                write_text(rs_output, json(res.partition).dump() + "\n");
                if (!rs_report.empty()) {
                    write_text(rs_report, json(res.report).dump(2) + "\n");
                }
            } catch (const ltd::resolve_error& e) {
                rs_backend.flush_log(*engine);
                std::cerr << "error: " << e.what() << "\npartial partition: " << json(e.partial()).dump() << '\n';
                if (!rs_report.empty()) {
                    write_text(rs_report, json(e.report()).dump(2) + "\n");
                }
                return 2;
            }
        } else if (*train) {
            std::ifstream in(tr_dataset);
            if (!in) throw std::runtime_error("cannot open " + tr_dataset);
            auto data = ltd::read_dataset_jsonl(in);
            ltd::forest_config_t fc;
            fc.n_trees = tr_trees;
            fc.threads = tr_threads;
            auto model = ltd::train(data, tr_seed, fc);
            write_text(tr_output, json(model).dump() + "\n");
        } else if (*predict) {
            auto model = read_json(pr_model).get<ltd::model_t>();
            std::ifstream in(pr_signatures);
            if (!in) throw std::runtime_error("cannot open " + pr_signatures);
            std::string line;
            while (std::getline(in, line)) {
                if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
                auto sig = json::parse(line).get<ltd::signature_t>();
                std::cout << json{{"seed", sig.seed},
                                  {"candidate", sig.candidate},
                                  {"alias", ltd::classify(model, sig)},
                                  {"alias_votes", model.alias_votes(sig.features)},
                                  {"trees", model.trees.size()}}
                                 .dump()
                          << '\n';
            }
        } else if (*importance) {
            auto model = read_json(im_model).get<ltd::model_t>();
            json out = json::array();
            for (const auto& f : ltd::feature_importance(model)) {
                out.push_back({{"feature", f.feature}, {"gini_importance", f.importance}});
            }
            std::cout << out.dump(2) << '\n';
        } else if (*cv) {
            std::ifstream in(cv_dataset);
            if (!in) throw std::runtime_error("cannot open " + cv_dataset);
            auto data = ltd::read_dataset_jsonl(in);
            ltd::forest_config_t fc;
            fc.n_trees = cv_trees;
            auto ev = ltd::evaluate_splits(data, cv_splits, cv_fraction, cv_seed, fc);
            json splits = json::array();
            for (const auto& s : ev.splits) {
                splits.push_back({{"precision", ltd::optional_json(s.precision())},
                                  {"recall", ltd::optional_json(s.recall())},
                                  {"f1", ltd::optional_json(s.f1())}});
            }
            std::cout << json{{"mean_precision", ev.mean_precision},
                              {"mean_recall", ev.mean_recall},
                              {"mean_f1", ev.mean_f1},
                              {"splits", splits}}
                             .dump(2)
                      << '\n';
        } else if (*eval) {
            auto p = read_json(ev_pred).get<ltd::partition_t>();
            auto t = read_json(ev_truth).get<ltd::partition_t>();
            ltd::pair_metrics_options_t opt;
            opt.remove_unresponsive = !ev_keep_unresponsive;
            if (!ev_unresponsive.empty()) opt.unresponsive = read_targets(ev_unresponsive);
            std::cout << json(ltd::pair_metrics(p, t, opt)).dump(2) << '\n';
        } else if (*closure) {
            std::vector<ltd::partition_t> parts;
            for (const auto& f : cl_inputs) parts.push_back(read_json(f).get<ltd::partition_t>());
            std::cout << json(ltd::union_closure(parts)).dump() << '\n';
        } else if (*stats) {
            std::vector<ltd::run_report_t> reports;
            std::vector<fs::path> files;
            for (const auto& e : fs::directory_iterator(st_dir)) {
                if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
            }
            std::sort(files.begin(), files.end());
            for (const auto& f : files) reports.push_back(read_json(f.string()).get<ltd::run_report_t>());
            std::cout << json(ltd::campaign_stats(reports)).dump(2) << '\n';
        } else if (*gen_topo) {
            auto spec = gt_spec.empty() ? ltd::netsim::topology_spec_t{}
                                        : read_json(gt_spec).get<ltd::netsim::topology_spec_t>();
            write_text(gt_output, json(ltd::netsim::generate_topology(spec, gt_seed)).dump(2) + "\n");
        } else if (*gen_data) {
            auto spec = gd_spec.empty() ? ltd::dataset_spec_t{} : read_json(gd_spec).get<ltd::dataset_spec_t>();
            auto data = ltd::generate_dataset(spec, gd_seed);
            std::ostringstream os;
            ltd::write_dataset_jsonl(os, data);
            write_text(gd_output, os.str());
        } else if (*truth) {
            auto topo = read_json(tt_topology).get<ltd::netsim::sim_topology_t>();
            std::cout << json(ltd::netsim::ground_truth(topo)).dump() << '\n';
        } else if (*simulate) {
            auto topo = read_json(sm_topology).get<ltd::netsim::sim_topology_t>();
            std::vector<ltd::probe_task_t> tasks;
            for (const auto& jt : read_json(sm_tasks)) {
                ltd::probe_task_t t;
                t.target = jt.at("target").get<ltd::address_t>();
                t.rate = jt.at("rate").get<ltd::rate_t>();
                t.duration = ltd::from_seconds(jt.value("duration", 5.0));
                if (jt.contains("flow_id")) t.flow_id = jt.at("flow_id").get<ltd::flow_id_t>();
                tasks.push_back(t);
            }
            ltd::engine_options_t eo;
            eo.keep_emission_log = !sm_log.empty();
            eo.log_outcomes = eo.keep_emission_log;
            ltd::netsim::sim_engine_t engine(topo, eo);
            ltd::safety_policy_t policy;
            auto res = engine.execute_round(tasks, policy);
            json out = json::array();
            for (const auto& [_, trace] : res) out.push_back(trace);
            std::cout << out.dump() << '\n';
            if (!sm_log.empty()) {
                std::ofstream log(sm_log);
                engine.emission_log().write_jsonl(log);
            }
        }
    } catch (const ltd::capability_error& e) {
        std::cerr << "capability error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
