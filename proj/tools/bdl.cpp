// bdl: desk-scale bilevel duality laboratory.
//
// Subcommands: solve, penalize, regularize, dual, gap, check-cq, validate.
// Exit codes: 0 success, 2 parse error, 3 infeasible/degenerate,
// 4 invariant violation, 5 bad flags.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "bilevel/analytic_dual.hpp"
#include "bilevel/json_io.hpp"
#include "bilevel/validate.hpp"

using namespace bdl;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitParse = 2;
constexpr int kExitInfeasible = 3;
constexpr int kExitInvariant = 4;
constexpr int kExitFlags = 5;

struct Loaded {
    BilevelInstance inst;
    std::string hash;
    std::vector<std::string> warnings;
};

int load_instance(const std::string& path, Loaded& out) {
    std::ifstream f(path);
    if (!f) {
        std::cerr << "bdl: cannot open '" << path << "'\n";
        return kExitParse;
    }
    std::stringstream ss;
    ss << f.rdbuf();
    std::string base_dir = std::filesystem::path(path).parent_path().string();
    ParseResult r = parse_problem(ss.str(), base_dir);
    if (!r.ok()) {
        std::cerr << "bdl: " << path << ": " << r.error->pretty() << "\n";
        return kExitParse;
    }
    out.inst = std::move(*r.instance);
    out.hash = instance_hash(out.inst);
    out.warnings = r.warnings;
    for (const auto& w : out.warnings) std::cerr << "bdl: warning: " << w << "\n";
    return kExitOk;
}

void emit(const ordered_json& j, const std::string& out_path, const std::string& format,
          const std::string& text_summary) {
    std::ostream* os = &std::cout;
    std::ofstream file;
    if (!out_path.empty()) {
        file.open(out_path);
        os = &file;
    }
    if (format == "text") {
        *os << text_summary << "\n";
    } else if (format == "csv") {
        // flat key,value rows
        std::function<void(const std::string&, const ordered_json&)> walk =
            [&](const std::string& prefix, const ordered_json& node) {
                if (node.is_object()) {
                    for (auto it = node.begin(); it != node.end(); ++it)
                        walk(prefix.empty() ? it.key() : prefix + "." + it.key(), it.value());
                } else if (node.is_array()) {
                    for (std::size_t i = 0; i < node.size(); ++i)
                        walk(prefix + "[" + std::to_string(i) + "]", node[i]);
                } else {
                    *os << prefix << "," << node.dump() << "\n";
                }
            };
        walk("", j);
    } else {
        *os << j.dump(2) << "\n";
    }
}

std::string fmt_pair(const BilevelInstance& inst, const PrimalSolution& s) {
    std::ostringstream os;
    os << "value " << s.value.to_string();
    if (!s.argmin.empty()) {
        auto [x, y] = s.argmin_xy(inst, 0);
        os << " at (";
        for (int i = 0; i < x.size(); ++i) os << (i ? "," : "") << fmt_double(x[i]);
        os << ";";
        for (int i = 0; i < y.size(); ++i) os << (i ? "," : "") << fmt_double(y[i]);
        os << ")";
        if (s.argmin.size() > 1) os << " and " << s.argmin.size() - 1 << " more";
    }
    return os.str();
}

std::vector<double> parse_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"bilevel duality laboratory"};
    app.require_subcommand(1);

    std::string input, out_path, format = "json", scheme_name_s, kind_name_s;
    double lambda = 1.0, eps = 0.1;
    std::string lambda_sweep;
    int eps_seq = -1;
    long budget = 10000;
    unsigned long long seed = 0;
    double tol_feas = -1, tol_value = -1;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("file", input, "problem file")->required();
        cmd->add_option("--out", out_path, "write the report here instead of stdout");
        cmd->add_option("--format", format, "json|csv|text")->check(CLI::IsMember({"json", "csv", "text"}));
        cmd->add_option("--feas-tol", tol_feas, "feasibility slack override");
        cmd->add_option("--value-tol", tol_value, "value-constraint band override");
    };

    CLI::App* solve = app.add_subcommand("solve", "solve the value reformulation");
    add_common(solve);

    CLI::App* penalize = app.add_subcommand("penalize", "solve the penalized problem");
    add_common(penalize);
    penalize->add_option("--lambda", lambda, "penalty parameter");
    penalize->add_option("--lambda-sweep", lambda_sweep, "comma-separated lambda list");

    CLI::App* regularize = app.add_subcommand("regularize", "solve the relaxed problems");
    add_common(regularize);
    regularize->add_option("--eps-seq", eps_seq, "solve for eps = 2^-k, k = 0..k_max")->required();

    CLI::App* dual = app.add_subcommand("dual", "search a dual scheme");
    add_common(dual);
    dual->add_option("--scheme", scheme_name_s, "dual scheme name")->required();
    dual->add_option("--lambda", lambda, "penalty parameter");
    dual->add_option("--eps", eps, "regularization parameter");
    dual->add_option("--budget", budget, "evaluation budget");
    dual->add_option("--seed", seed, "search seed");

    CLI::App* gap = app.add_subcommand("gap", "dual search with the primal recomputed");
    add_common(gap);
    gap->add_option("--scheme", scheme_name_s, "dual scheme name")->required();
    gap->add_option("--lambda", lambda, "penalty parameter");
    gap->add_option("--eps", eps, "regularization parameter");
    gap->add_option("--budget", budget, "evaluation budget");
    gap->add_option("--seed", seed, "search seed");

    CLI::App* checkcq = app.add_subcommand("check-cq", "run a constraint-qualification check");
    add_common(checkcq);
    checkcq->add_option("--kind", kind_name_s, "check kind")->required();
    checkcq->add_option("--lambda", lambda, "penalty parameter");
    checkcq->add_option("--eps", eps, "regularization parameter");
    checkcq->add_option("--budget", budget, "probe budget");
    checkcq->add_option("--seed", seed, "probe seed");

    CLI::App* validate = app.add_subcommand("validate", "run the instance invariant suite");
    add_common(validate);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kExitOk : kExitFlags;
    }

    Loaded L;
    if (int rc = load_instance(input, L); rc != kExitOk) return rc;
    const BilevelInstance& inst = L.inst;
    Tols tols = inst.default_tols();
    if (tol_feas >= 0) tols.feas = tol_feas;
    if (tol_value >= 0) tols.value = tol_value;

    try {
        if (solve->parsed()) {
            GridFunction phi = inst.compute_phi(tols.feas);
            PrimalSolution s =
                inst.geometric ? solve_geometric(inst, phi, tols) : solve_llvf(inst, phi, tols);
            ordered_json j = primal_to_json(inst, s);
            j["instance_sha256"] = L.hash;
            emit(j, out_path, format, fmt_pair(inst, s));
            return s.value.is_finite() ? kExitOk : kExitInfeasible;
        }
        if (penalize->parsed()) {
            DualPrecomp pre = make_precomp(inst, tols);
            std::vector<double> lambdas =
                lambda_sweep.empty() ? std::vector<double>{lambda} : parse_list(lambda_sweep);
            PrimalSolution base = inst.geometric ? solve_geometric(inst, pre.phi, tols)
                                                 : solve_llvf(inst, pre.phi, tols);
            ordered_json j;
            j["instance_sha256"] = L.hash;
            ordered_json sols = ordered_json::array();
            std::string text;
            for (double lam : lambdas) {
                PrimalSolution s = solve_penalized(inst, pre.phi, lam, tols);
                sols.push_back(primal_to_json(inst, s));
                text += "lambda=" + fmt_double(lam) + ": " + fmt_pair(inst, s) + "\n";
            }
            j["solutions"] = sols;
            if (base.value.is_finite() && !base.argmin.empty()) {
                std::vector<double> grid = {1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0, 1000.0};
                CalmnessResult cal = partial_calmness_probe(inst, pre, base.argmin.front(), grid);
                ordered_json cj;
                cj["k_f"] = cal.k_f;
                cj["k_phi"] = cal.k_phi;
                cj["lambda_grid"] = grid;
                if (cal.lambda_hat) cj["lambda_hat"] = *cal.lambda_hat;
                if (cal.counterexample) cj["counterexample"] = *cal.counterexample;
                cj["per_lambda"] = cal.per_lambda;
                j["partial_calmness"] = cj;
                if (cal.lambda_hat)
                    text += "partial calmness validated from lambda = " +
                            fmt_double(*cal.lambda_hat) + " (grid probe)\n";
            }
            emit(j, out_path, format, text);
            return kExitOk;
        }
        if (regularize->parsed()) {
            if (eps_seq < 0) return kExitFlags;
            GridFunction phi = inst.compute_phi(tols.feas);
            PrimalSolution base = inst.geometric ? solve_geometric(inst, phi, tols)
                                                 : solve_llvf(inst, phi, tols);
            ordered_json j;
            j["instance_sha256"] = L.hash;
            ordered_json rows = ordered_json::array();
            std::string text;
            GridSpec joint = inst.joint_grid();
            for (int kk = 0; kk <= eps_seq; ++kk) {
                double e = std::pow(2.0, -kk);
                PrimalSolution s = solve_regularized(inst, phi, e, tols);
                ordered_json row = primal_to_json(inst, s);
                double dist = std::numeric_limits<double>::infinity();
                for (auto a : s.argmin)
                    for (auto b : base.argmin) {
                        auto ia = joint.multi_index(a);
                        auto ib = joint.multi_index(b);
                        double dsteps = 0;
                        for (std::size_t d = 0; d < ia.size(); ++d)
                            dsteps = std::max(dsteps, static_cast<double>(std::abs(ia[d] - ib[d])));
                        dist = std::min(dist, dsteps);
                    }
                row["argmin_distance_steps"] = dist;
                rows.push_back(row);
                text += "eps=2^-" + std::to_string(kk) + ": " + fmt_pair(inst, s) + "\n";
            }
            j["reference"] = primal_to_json(inst, base);
            j["table"] = rows;
            emit(j, out_path, format, text);
            return base.value.is_finite() ? kExitOk : kExitInfeasible;
        }
        if (dual->parsed() || gap->parsed()) {
            auto scheme = scheme_from_name(scheme_name_s);
            if (!scheme) {
                std::cerr << "bdl: unknown scheme '" << scheme_name_s << "'\n";
                return kExitFlags;
            }
            DualPrecomp pre = make_precomp(inst, tols);
            DualParams params;
            params.lambda = lambda;
            params.eps = eps;
            GapReport rep;
            if (*scheme == DualScheme::D_LAMBDA) {
                auto analytic = search_dual_analytic(inst, pre, params, budget, seed);
                rep = analytic ? *analytic : search_dual(inst, pre, *scheme, params, budget, seed);
            } else {
                rep = search_dual(inst, pre, *scheme, params, budget, seed);
            }
            ordered_json j = gap_to_json(rep);
            j["instance_sha256"] = L.hash;
            std::string text = std::string(scheme_name(rep.scheme)) +
                               ": primal=" + rep.primal.to_string() +
                               " dual=" + rep.dual.to_string() + " gap=" + rep.gap.to_string();
            emit(j, out_path, format, text);
            if (!rep.primal.is_finite()) return kExitInfeasible;
            if (rep.polarity == Polarity::TRUE_LOWER_BOUND && rep.gap.is_finite() &&
                rep.gap.raw() < -1e-6)
                return kExitInvariant;  // a certified bound above the primal is a bug
            return kExitOk;
        }
        if (checkcq->parsed()) {
            auto kind = cq_from_name(kind_name_s);
            if (!kind) {
                std::cerr << "bdl: unknown check kind '" << kind_name_s << "'\n";
                return kExitFlags;
            }
            DualPrecomp pre = make_precomp(inst, tols);
            CheckParams cp;
            cp.lambda = lambda;
            cp.eps = eps;
            cp.budget = budget;
            cp.seed = seed;
            CQReport rep = check(*kind, inst, pre, cp);
            ordered_json j = cq_to_json(rep);
            j["instance_sha256"] = L.hash;
            std::string text = std::string(cq_name(rep.kind)) + ": " + verdict_name(rep.verdict) +
                               (rep.heuristic ? " (heuristic)" : "");
            emit(j, out_path, format, text);
            return kExitOk;
        }
        if (validate->parsed()) {
            auto bad = validate_instance(inst);
            ordered_json j;
            j["instance_sha256"] = L.hash;
            j["violations"] = bad;
            std::string text = bad.empty() ? "all invariants hold" : "violations found";
            for (const auto& b : bad) text += "\n  " + b;
            emit(j, out_path, format, text);
            return bad.empty() ? kExitOk : kExitInvariant;
        }
    } catch (const std::invalid_argument& ex) {
        std::cerr << "bdl: " << ex.what() << "\n";
        return kExitInfeasible;
    } catch (const std::exception& ex) {
        std::cerr << "bdl: " << ex.what() << "\n";
        return kExitInvariant;
    }
    return kExitFlags;
}
