// moe_lab: construct theorem layers, verify lemma statements by Monte-Carlo,
// certify separation bounds, and run teacher-student training sweeps.
//
// Exit codes: 0 = success / all checks passed, 1 = a check failed,
// 2 = usage or configuration error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "moelab/binomial.hpp"
#include "moelab/checkpoint.hpp"
#include "moelab/constructions.hpp"
#include "moelab/lemma_lab.hpp"
#include "moelab/matching.hpp"
#include "moelab/moe.hpp"
#include "moelab/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace moelab;

static const char* kVersion = "moe_lab 0.1.0";

namespace {

json provenance(const std::string& command, const json& config) {
    return json{{"tool", kVersion}, {"command", command}, {"config", config}};
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << j.dump(2) << '\n';
}

InputDistribution make_dist(const std::string& name, int d) {
    if (name == "gaussian") return {InputDistribution::Kind::GaussianIso, d};
    if (name == "ball") return {InputDistribution::Kind::UnitBall, d};
    throw CLI::ValidationError("--dist", "expected gaussian or ball");
}

int cmd_construct(const std::string& activation, int m, int k, int w, int d,
                  std::uint64_t seed, long norm_samples, const std::string& out_dir) {
    fs::create_directories(out_dir);
    AssembledMoE built = assemble_theorem_moe(activation_from_string(activation), m, k, w, d,
                                              seed, RegimeConstants{}, norm_samples);
    const fs::path dir(out_dir);
    save_checkpoint(built.layer, (dir / "checkpoint.bin").string(), seed);
    json rep = built.report.to_json();
    rep["provenance"] = provenance("construct", {{"activation", activation}, {"m", m}, {"k", k},
                                                 {"w", w}, {"d", d}, {"seed", seed}});
    write_json(dir / "construction_report.json", rep);
    std::cout << rep.dump(2) << '\n';
    return built.report.overall_pass() ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    // Documented knob: MOE_LAB_THREADS (default 1). Everything here runs
    // single-threaded for bit-reproducibility; the variable caps Eigen's
    // internal parallelism if a parallel BLAS build is in use.
    if (const char* th = std::getenv("MOE_LAB_THREADS"))
        Eigen::setNbThreads(std::max(1, std::atoi(th)));
    else
        Eigen::setNbThreads(1);

    CLI::App app{"mixture-of-experts granularity laboratory"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    // ---- construct ----
    std::string activation = "constant", out_dir = ".";
    int m = 8, k = 2, w = 1, d = 256;
    std::uint64_t seed = 1;
    long n = 1000000, norm_samples = 200000;
    auto* construct = app.add_subcommand("construct", "build a theorem-style layer, write checkpoint + report");
    construct->add_option("--activation", activation)->check(CLI::IsMember({"constant", "linear", "relu"}));
    construct->add_option("--m", m)->required();
    construct->add_option("--k", k)->required();
    construct->add_option("--w", w);
    construct->add_option("--d", d)->required();
    construct->add_option("--seed", seed);
    construct->add_option("--norm-samples", norm_samples);
    construct->add_option("--output-dir", out_dir);

    // ---- verify ----
    const std::vector<std::string> lemma_ids = {
        "routing-balance", "order-stats", "chi2-tail",   "tube-volume",
        "covariance-rank", "linear-separation", "relu-incoherence",
        "unique-count",    "norm-bound",  "entropy-gap"};
    std::string lemma, dist_name = "gaussian";
    int n_seeds = 1, n_constrained = 1, kappa = 1, arity = 2, m_prime = 4, k_prime = 1;
    long n_draws = 100;
    double x_arg = 1.0, t_arg = 0.1, delta = 0.0, eps = 0.5, c_const = 1e-6,
           big_c = 1.0, c_prime = 0.5, kappa_constant = 10.0;
    auto* verify = app.add_subcommand("verify", "Monte-Carlo verification of a lemma statement");
    verify->add_option("--lemma", lemma)->required()->check(CLI::IsMember(lemma_ids));
    verify->add_option("--m", m);
    verify->add_option("--k", k);
    verify->add_option("--w", w);
    verify->add_option("--d", d);
    verify->add_option("--n", n, "samples / trials per seed");
    verify->add_option("--seed", seed, "base seed");
    verify->add_option("--seeds", n_seeds, "number of consecutive seeds");
    verify->add_option("--dist", dist_name)->check(CLI::IsMember({"gaussian", "ball"}));
    verify->add_option("--x", x_arg, "chi-squared tail parameter");
    verify->add_option("--t", t_arg, "tube half-width");
    verify->add_option("--n-constrained", n_constrained, "tube: constrained coordinates");
    verify->add_option("--delta", delta, "order-stats shift");
    verify->add_option("--eps", eps, "linear separation: overlap slack");
    verify->add_option("--kappa", kappa, "spectral tail index");
    verify->add_option("--kappa-constant", kappa_constant, "covariance-rank kappa constant");
    verify->add_option("--c-const", c_const, "linear separation threshold constant");
    verify->add_option("--arity", arity, "relu incoherence tuple arity");
    verify->add_option("--n-draws", n_draws, "unique-count draws per trial");
    verify->add_option("--m-prime", m_prime);
    verify->add_option("--k-prime", k_prime);
    verify->add_option("--c", big_c, "entropy-gap premise constant");
    verify->add_option("--c-prime", c_prime, "entropy-gap overlap constant");
    verify->add_option("--output-dir", out_dir);

    // ---- certify ----
    std::string teacher_path, student_path;
    int delta_threshold = 0;
    auto* certify = app.add_subcommand("certify", "matched lower bound vs direct MC error for two constant layers");
    certify->add_option("--teacher", teacher_path)->required();
    certify->add_option("--student", student_path)->required();
    certify->add_option("--n", n);
    certify->add_option("--seed", seed);
    certify->add_option("--delta-threshold", delta_threshold, "min |S delta S'| for an edge (0 = k)");
    certify->add_option("--dist", dist_name)->check(CLI::IsMember({"gaussian", "ball"}));
    certify->add_option("--output-dir", out_dir);

    // ---- train ----
    std::string gating = "softmax-topk", teacher_gating = "equal-hard";
    int sm = 16, sk = 8, sw = 10;
    bool route_bias = false, f32 = false, paper_scale = false;
    TrainConfig tc;
    auto* train_cmd = app.add_subcommand("train", "teacher-student SGD run");
    train_cmd->add_option("--teacher", teacher_path, "teacher checkpoint (omit for a random teacher)");
    train_cmd->add_option("--activation", activation)->check(CLI::IsMember({"constant", "linear", "relu"}));
    train_cmd->add_option("--m", m, "random teacher experts");
    train_cmd->add_option("--k", k);
    train_cmd->add_option("--w", w);
    train_cmd->add_option("--d", d);
    train_cmd->add_option("--teacher-gating", teacher_gating)->check(CLI::IsMember({"equal-hard", "softmax-topk"}));
    train_cmd->add_option("--student-m", sm);
    train_cmd->add_option("--student-k", sk);
    train_cmd->add_option("--student-w", sw);
    train_cmd->add_option("--gating", gating)->check(CLI::IsMember({"equal-hard", "softmax-topk"}));
    train_cmd->add_flag("--route-bias", route_bias, "trainable student routing bias");
    train_cmd->add_option("--batch", tc.batch_size);
    train_cmd->add_option("--total-samples", tc.total_samples);
    train_cmd->add_option("--lr0", tc.lr0);
    train_cmd->add_option("--momentum", tc.momentum);
    train_cmd->add_option("--eval-every", tc.eval_every);
    train_cmd->add_option("--eval-samples", tc.eval_samples);
    train_cmd->add_option("--seed", seed);
    train_cmd->add_flag("--f32", f32, "single-precision trainer arithmetic");
    train_cmd->add_flag("--paper-scale", paper_scale, "d=256, 26M samples");
    train_cmd->add_option("--output-dir", out_dir);

    // ---- sweep ----
    std::vector<int> granularities = {1, 2, 4, 8};
    double active_mult = 1.25, total_mult = 1.0;
    auto* sweep = app.add_subcommand("sweep", "granularity sweep against one random teacher");
    sweep->add_option("--m", m, "teacher experts")->default_val(16);
    sweep->add_option("--k", k)->default_val(8);
    sweep->add_option("--w", w)->default_val(8);
    sweep->add_option("--d", d)->default_val(64);
    sweep->add_option("--activation", activation)->default_val("relu")->check(CLI::IsMember({"constant", "linear", "relu"}));
    sweep->add_option("--granularities", granularities, "student active-expert counts");
    sweep->add_option("--active-mult", active_mult, "student active params / teacher active params");
    sweep->add_option("--total-mult", total_mult, "student total params multiplier");
    sweep->add_option("--gating", gating)->check(CLI::IsMember({"equal-hard", "softmax-topk"}));
    sweep->add_flag("--route-bias", route_bias);
    sweep->add_option("--batch", tc.batch_size);
    sweep->add_option("--total-samples", tc.total_samples);
    sweep->add_option("--eval-every", tc.eval_every);
    sweep->add_option("--eval-samples", tc.eval_samples);
    sweep->add_option("--seed", seed);
    sweep->add_flag("--paper-scale", paper_scale);
    sweep->add_option("--output-dir", out_dir);

    // ---- report ----
    std::string report_dir = ".";
    auto* report = app.add_subcommand("report", "summarize every JSON report in a directory");
    report->add_option("--dir", report_dir)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*construct)
            return cmd_construct(activation, m, k, w, d, seed, norm_samples, out_dir);

        if (*verify) {
            // Incoherence needs union_target = (R+1)k/2 >= kw to be reachable, which the
            // shared m=16,k=8 defaults cannot satisfy; pick a feasible regime unless overridden.
            if (lemma == "relu-incoherence") {
                if (!verify->count("--k")) k = 2;
                if (!verify->count("--arity")) arity = 4;
            }
            fs::create_directories(out_dir);
            bool all_pass = true;
            json reports = json::array();
            for (int si = 0; si < n_seeds; ++si) {
                const std::uint64_t s = seed + static_cast<std::uint64_t>(si);
                LemmaReport rep;
                if (lemma == "routing-balance") {
                    MoELayer layer = MoELayer::zeros(make_config(m, k, w, d, Activation::Constant,
                                                                 Gating::EqualHard, false));
                    layer.routing = gaussian_routing(m, d, s);
                    rep = check_routing_balance(region_census(layer, make_dist(dist_name, d), n, s), m, k);
                } else if (lemma == "order-stats") {
                    rep = order_stat_probability(m, k, delta, n, s);
                } else if (lemma == "chi2-tail") {
                    rep = chi2_tail_check(d, x_arg, n, s);
                } else if (lemma == "tube-volume") {
                    rep = tube_volume_estimate(make_dist(dist_name, d), Eigen::VectorXd::Zero(d),
                                               t_arg, n_constrained, n, s);
                } else if (lemma == "covariance-rank") {
                    rep = covariance_rank_check(make_dist(dist_name, d),
                                                [](const Eigen::VectorXd& v) { return v(0) > 0.0; },
                                                kappa_constant, n, s);
                } else if (lemma == "linear-separation") {
                    rep = linear_separation_check(linear_experts(m, k, w, d, s), k, eps, kappa, n,
                                                  c_const, s);
                } else if (lemma == "relu-incoherence") {
                    rep = relu_incoherence_check(relu_experts(m, k, w, d, s), k, w, arity, n, s);
                } else if (lemma == "unique-count") {
                    rep = unique_count_tail(n_draws, d, n, s);
                } else if (lemma == "norm-bound") {
                    AssembledMoE built = assemble_theorem_moe(activation_from_string(activation),
                                                              m, k, w, d, s, RegimeConstants{}, 0);
                    rep = norm_upper_check(built.layer, make_dist(dist_name, d), n, s);
                } else if (lemma == "entropy-gap") {
                    rep = entropy_gap_check(m, k, m_prime, k_prime, big_c, c_prime);
                }
                all_pass = all_pass && rep.pass;
                reports.push_back(rep.to_json());
            }
            json out = {{"provenance", provenance("verify", {{"lemma", lemma}, {"seed", seed},
                                                             {"seeds", n_seeds}, {"n", n}})},
                        {"all_pass", all_pass},
                        {"reports", reports}};
            write_json(fs::path(out_dir) / ("verify_" + lemma + ".json"), out);
            std::cout << out.dump(2) << '\n';
            return all_pass ? 0 : 1;
        }

        if (*certify) {
            if (!fs::exists(teacher_path) || !fs::exists(student_path)) {
                std::cerr << "certify: checkpoint not found\n";
                return 2;
            }
            fs::create_directories(out_dir);
            MoELayer f = load_checkpoint(teacher_path);
            MoELayer g = load_checkpoint(student_path);
            Certificate cert = error_lower_bound_constant(f, g, make_dist(dist_name, f.config.d),
                                                          n, seed, delta_threshold);
            json out = cert.to_json();
            out["provenance"] = provenance("certify", {{"teacher", teacher_path},
                                                       {"student", student_path},
                                                       {"n", n}, {"seed", seed}});
            write_json(fs::path(out_dir) / "certificate.json", out);
            std::cout << out.dump(2) << '\n';
            return cert.sound() ? 0 : 1;
        }

        if (*train_cmd) {
            fs::create_directories(out_dir);
            if (paper_scale) {
                d = 256;
                tc.total_samples = 26000000;
                tc.batch_size = 2048;
            }
            MoELayer teacher;
            if (!teacher_path.empty()) {
                teacher = load_checkpoint(teacher_path);
            } else {
                MoEConfig tcfg = make_config(m, k, w, d, activation_from_string(activation),
                                             gating_from_string(teacher_gating), false);
                teacher = init_student(tcfg, 0.0, seed ^ 0x7465616368ULL);
            }
            MoEConfig scfg = make_config(sm, sk, sw, teacher.config.d,
                                         teacher.config.activation, gating_from_string(gating),
                                         route_bias);
            MoELayer student = init_student(scfg, 0.0, seed);
            tc.seed = seed;
            tc.precision = f32 ? Precision::F32 : Precision::F64;
            TrainLog lg = train(teacher, student, make_dist(dist_name, teacher.config.d), tc);
            std::ofstream csv(fs::path(out_dir) / "train_log.csv");
            lg.write_csv(csv);
            json out = lg.summary();
            out["provenance"] = provenance("train", {{"seed", seed}, {"lr0", tc.lr0},
                                                     {"batch", tc.batch_size},
                                                     {"total_samples", tc.total_samples}});
            write_json(fs::path(out_dir) / "train_summary.json", out);
            std::cout << out.dump(2) << '\n';
            return lg.diverged ? 1 : 0;
        }

        if (*sweep) {
            fs::create_directories(out_dir);
            if (paper_scale) {
                d = 256;
                tc.total_samples = 26000000;
            }
            MoEConfig tcfg = make_config(m, k, w, d, activation_from_string(activation),
                                         Gating::EqualHard, false);
            MoELayer teacher = init_student(tcfg, 0.0, seed ^ 0x7465616368ULL);
            const long active = std::lround(active_mult * k * w);
            std::vector<SweepCell> grid;
            for (int g : granularities) {
                if (g <= 0 || active % g != 0) {
                    std::cerr << "sweep: granularity " << g << " does not divide the active budget "
                              << active << "\n";
                    return 2;
                }
                const int wg = static_cast<int>(active / g);
                const int mg = std::max(g, static_cast<int>(std::lround(2.0 * g * total_mult)));
                std::ostringstream label;
                label << "g" << g << "_m" << mg << "_w" << wg;
                grid.push_back({label.str(),
                                make_config(mg, g, wg, d, tcfg.activation,
                                            gating_from_string(gating), route_bias),
                                0.0});
            }
            tc.seed = seed;
            std::vector<SweepRow> rows = run_granularity_sweep(
                teacher, grid, make_dist(dist_name, d), tc);
            std::ofstream csv(fs::path(out_dir) / "sweep.csv");
            write_sweep_csv(rows, csv);
            write_sweep_csv(rows, std::cout);
            return 0;
        }

        if (*report) {
            if (!fs::exists(report_dir)) {
                std::cerr << "report: no such directory\n";
                return 2;
            }
            std::vector<std::string> unreadable;
            std::ostringstream md;
            md << "| file | type | status |\n|---|---|---|\n";
            std::vector<fs::path> files;
            for (const auto& ent : fs::directory_iterator(report_dir))
                if (ent.path().extension() == ".json") files.push_back(ent.path());
            std::sort(files.begin(), files.end());
            for (const auto& p : files) {
                json j;
                try {
                    std::ifstream is(p);
                    is >> j;
                } catch (...) {
                    unreadable.push_back(p.filename().string());
                    continue;
                }
                std::string type = "other", status = "-";
                if (j.contains("lemma_id") || j.contains("reports")) {
                    type = "lemma";
                    status = (j.value("all_pass", j.value("pass", false))) ? "pass" : "FAIL";
                } else if (j.contains("overall_pass")) {
                    type = "construction";
                    status = j["overall_pass"].get<bool>() ? "pass" : "FAIL";
                } else if (j.contains("sound")) {
                    type = "certificate";
                    status = j["sound"].get<bool>() ? "sound" : "UNSOUND";
                } else if (j.contains("diverged")) {
                    type = "train";
                    status = j["diverged"].get<bool>() ? "diverged" : "ok";
                }
                md << "| " << p.filename().string() << " | " << type << " | " << status << " |\n";
            }
            if (!unreadable.empty()) {
                md << "\nunreadable:\n";
                for (const auto& u : unreadable) md << "- " << u << "\n";
            }
            std::ofstream out(fs::path(report_dir) / "report.md");
            out << md.str();
            std::cout << md.str();
            return unreadable.empty() ? 0 : 1;
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
