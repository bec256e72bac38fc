#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "sortition/accountant.hpp"
#include "sortition/bounds.hpp"
#include "sortition/refinement.hpp"
#include "sortition/scenario.hpp"
#include "sortition/simharness.hpp"

using namespace sortition;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitAssert = 3;

// "lo:hi:step" with decimal-rational endpoints, enumerated exactly so sweep
// grids are reproducible independent of floating point rounding.
std::vector<Ratio> parse_sweep(const std::string& text) {
    auto first = text.find(':');
    auto second = text.find(':', first == std::string::npos ? first : first + 1);
    if (first == std::string::npos || second == std::string::npos)
        throw std::invalid_argument("sweep must look like lo:hi:step, got \"" + text + "\"");
    mpq_class lo = Ratio::from_decimal(text.substr(0, first)).to_mpq();
    mpq_class hi = Ratio::from_decimal(text.substr(first + 1, second - first - 1)).to_mpq();
    mpq_class step = Ratio::from_decimal(text.substr(second + 1)).to_mpq();
    if (step == 0 && lo != hi) throw std::invalid_argument("sweep step must be positive");
    std::vector<Ratio> points;
    for (mpq_class q = lo; q <= hi; q += step) {
        q.canonicalize();
        if (!q.get_num().fits_ulong_p() || !q.get_den().fits_ulong_p())
            throw std::invalid_argument("sweep point out of range");
        points.push_back(Ratio(q.get_num().get_ui(), q.get_den().get_ui()));
        if (step == 0) break;
    }
    if (points.empty()) throw std::invalid_argument("empty sweep: " + text);
    return points;
}

// Output sink: --out FILE or stdout.
class Sink {
  public:
    explicit Sink(const std::string& path) {
        if (!path.empty()) {
            file_.open(path, std::ios::binary);
            if (!file_) throw std::invalid_argument("cannot open output file: " + path);
        }
    }
    std::ostream& os() { return file_.is_open() ? file_ : std::cout; }

  private:
    std::ofstream file_;
};

void csv_header(std::ostream& os, const char* kind, const scenario::RunManifest& manifest) {
    os << "# " << kind << " v1\n";
    os << "# manifest: " << manifest.json() << '\n';
}

struct BoundsArgs {
    bool theorem1 = false;
    bool secagg = false;
    bool overselect = false;
    bool exposure = false;
    bool repeat_client = false;
    bool repeat_server = false;
    bool epsilon = false;

    uint64_t n_min = 0;
    uint64_t n = 0;
    uint64_t n_max = 0;
    uint64_t c = 0;
    uint64_t s = 0;
    std::string alpha = "1.3";
    std::string alpha_sweep;
    double eta = -1.0;
    std::string eta_sweep;
    uint64_t t = 0;
    uint64_t k = 0;
    uint64_t rounds = 0;
    uint64_t r = 0;
    double delta = 0.0;
    double sigma = 1.0;
    std::string accountant = "gaussian";
    double accountant_value = 1.0;
    std::string variant = "client";
    std::string out;
};

int cmd_bounds(const BoundsArgs& args) {
    int modes = args.theorem1 + args.secagg + args.overselect + args.exposure +
                args.repeat_client + args.repeat_server + args.epsilon;
    if (modes != 1) {
        std::cerr << "error: pick exactly one of --theorem1 --secagg --overselect --exposure "
                     "--repeat-client --repeat-server --epsilon\n";
        return kExitUsage;
    }
    Ratio alpha = Ratio::from_decimal(args.alpha);

    scenario::RunManifest manifest;
    manifest.subcommand = "bounds";
    if (!args.out.empty())
        manifest.outputs.push_back(std::filesystem::path(args.out).filename().string());
    Sink sink(args.out);
    std::ostream& os = sink.os();

    if (args.theorem1) {
        bounds::SelectionParams params{args.n_min, args.c, args.s, alpha};
        params.validate();
        std::vector<double> etas;
        if (!args.eta_sweep.empty())
            for (const Ratio& p : parse_sweep(args.eta_sweep)) etas.push_back(p.value());
        if (args.eta >= 0.0) etas.push_back(args.eta);
        if (etas.empty()) {
            std::cerr << "error: --theorem1 needs --eta or --eta-sweep\n";
            return kExitUsage;
        }
        manifest.add("mode", "theorem1");
        manifest.add("n_min", args.n_min);
        manifest.add("c", args.c);
        manifest.add("s", args.s);
        manifest.add("alpha", alpha.str());
        csv_header(os, "sortition-bounds", manifest);
        os << "eta,bound,log10_bound\n";
        for (double eta : etas) {
            double bound = bounds::dishonest_fraction_bound(params, eta);
            os << scenario::format_double(eta) << ',' << scenario::format_double(bound) << ','
               << scenario::format_log10(bound) << '\n';
        }
        return kExitOk;
    }

    if (args.secagg) {
        bounds::SelectionParams params{args.n_min, args.c, args.s, alpha};
        params.validate();
        if (args.t == 0) {
            std::cerr << "error: --secagg needs --t\n";
            return kExitUsage;
        }
        manifest.add("mode", "secagg");
        manifest.add("n_min", args.n_min);
        manifest.add("c", args.c);
        manifest.add("s", args.s);
        manifest.add("alpha", alpha.str());
        manifest.add("t", args.t);
        csv_header(os, "sortition-bounds", manifest);
        os << "t,bound,log10_bound\n";
        double bound = bounds::secagg_failure_bound(params, args.t);
        os << args.t << ',' << scenario::format_double(bound) << ','
           << scenario::format_log10(bound) << '\n';
        return kExitOk;
    }

    if (args.overselect) {
        if (args.n == 0 || args.s == 0) {
            std::cerr << "error: --overselect needs --n and --s\n";
            return kExitUsage;
        }
        std::vector<Ratio> alphas;
        if (!args.alpha_sweep.empty()) alphas = parse_sweep(args.alpha_sweep);
        else alphas.push_back(alpha);
        manifest.add("mode", "overselect");
        manifest.add("n", args.n);
        manifest.add("s", args.s);
        csv_header(os, "sortition-bounds", manifest);
        os << "alpha,success,log10_success\n";
        for (const Ratio& a : alphas) {
            double success = bounds::overselection_success(args.n, args.s, a);
            os << a.str() << ',' << scenario::format_double(success) << ','
               << scenario::format_log10(success) << '\n';
        }
        return kExitOk;
    }

    if (args.exposure) {
        bounds::SelectionParams params{args.n_min, args.c, args.s, alpha};
        params.validate();
        if (args.rounds == 0) {
            std::cerr << "error: --exposure needs --rounds\n";
            return kExitUsage;
        }
        manifest.add("mode", "exposure");
        manifest.add("n_min", args.n_min);
        manifest.add("c", args.c);
        manifest.add("s", args.s);
        manifest.add("alpha", alpha.str());
        manifest.add("rounds", args.rounds);
        csv_header(os, "sortition-bounds", manifest);
        os << "k,rounds,exposure,log10_exposure\n";
        double p = bounds::multi_round_exposure(params, args.k, args.rounds);
        os << args.k << ',' << args.rounds << ',' << scenario::format_double(p) << ','
           << scenario::format_log10(p) << '\n';
        return kExitOk;
    }

    if (args.repeat_client || args.repeat_server) {
        bounds::SelectionParams params{args.n_min, args.c, args.s, alpha};
        params.validate();
        if (args.rounds == 0) {
            std::cerr << "error: repeat bounds need --rounds\n";
            return kExitUsage;
        }
        manifest.add("mode", args.repeat_client ? "repeat-client" : "repeat-server");
        manifest.add("n_min", args.n_min);
        manifest.add("s", args.s);
        manifest.add("alpha", alpha.str());
        manifest.add("rounds", args.rounds);
        manifest.add("r", args.r);
        if (args.repeat_server) manifest.add("n_max", args.n_max);
        csv_header(os, "sortition-bounds", manifest);
        os << "r,rounds,q,log10_q\n";
        double q = args.repeat_client
                       ? bounds::repeat_selection_bound(params, args.rounds, args.r)
                       : bounds::repeat_selection_bound_server(params, args.rounds, args.r,
                                                               args.n_max);
        os << args.r << ',' << args.rounds << ',' << scenario::format_double(q) << ','
           << scenario::format_log10(q) << '\n';
        return kExitOk;
    }

    // epsilon
    bounds::EpsilonParams params;
    params.selection = bounds::SelectionParams{args.n_min, args.c, args.s, alpha};
    params.secagg_threshold = args.t;
    params.rounds = args.rounds;
    params.delta = args.delta;
    params.sigma = args.sigma;
    params.max_population = args.n_max;
    bool server = args.variant == "server";
    if (!server && args.variant != "client") {
        std::cerr << "error: --variant must be client or server\n";
        return kExitUsage;
    }
    params.validate(server);
    auto accountant = bounds::accountant_by_name(args.accountant, args.accountant_value);
    manifest.add("mode", "epsilon");
    manifest.add("variant", args.variant);
    manifest.add("n_min", args.n_min);
    manifest.add("c", args.c);
    manifest.add("s", args.s);
    manifest.add("alpha", alpha.str());
    manifest.add("t", args.t);
    manifest.add("rounds", args.rounds);
    manifest.add("delta", scenario::format_double(args.delta));
    manifest.add("sigma", scenario::format_double(args.sigma));
    manifest.add("accountant", args.accountant);
    if (server) manifest.add("n_max", args.n_max);
    csv_header(os, "sortition-bounds", manifest);
    os << "variant,feasible,epsilon,k,r,p_k,q_r,delta_prime\n";
    bounds::EpsilonResult res = server ? bounds::ddp_epsilon_server(params, *accountant)
                                       : bounds::ddp_epsilon_client(params, *accountant);
    os << args.variant << ',' << (res.feasible ? "true" : "false") << ','
       << scenario::format_double(res.epsilon) << ',' << res.k << ',' << res.r << ','
       << scenario::format_double(res.p_k) << ',' << scenario::format_double(res.q_r) << ','
       << scenario::format_double(res.delta_prime) << '\n';
    return kExitOk;
}

struct SimulateArgs {
    std::string scenario_path;
    std::string out;
    std::optional<uint64_t> seed;
    std::optional<uint64_t> trials;
    std::optional<unsigned> workers;
    bool dump_transcript = false;
    bool assert_bounds = false;
    std::vector<double> etas;
};

int cmd_simulate(const SimulateArgs& args) {
    sim::CampaignConfig campaign = scenario::load_campaign(args.scenario_path);
    if (args.seed) campaign.seed = *args.seed;
    if (args.trials) campaign.trials = *args.trials;
    if (args.workers) campaign.workers = *args.workers;
    if (args.dump_transcript) campaign.keep_transcript = true;

    sim::MonteCarloReport report = sim::monte_carlo(campaign);

    std::vector<sim::BoundCheckRow> rows;
    if (args.assert_bounds || !args.etas.empty()) {
        bounds::SelectionParams params;
        params.population_floor = report.population_after_refine;
        params.dishonest = report.dishonest_after_refine;
        params.target = report.target;
        params.over_selection = report.over_selection;
        std::vector<double> etas = args.etas.empty() ? std::vector<double>{0.1, 0.2, 0.3}
                                                     : args.etas;
        rows = sim::compare_to_bound(report, params, etas);
    }

    scenario::RunManifest manifest;
    manifest.subcommand = "simulate";
    manifest.seed = campaign.seed;
    manifest.add("campaign", scenario::campaign_json(campaign));
    manifest.add("scenario_file", args.scenario_path);

    if (!args.out.empty()) {
        std::filesystem::path dir(args.out);
        // basenames only: the report must not change with the directory it lands in
        manifest.outputs.push_back("summary.json");
        manifest.outputs.push_back("x_histogram.csv");
        if (!rows.empty()) manifest.outputs.push_back("bound_check.csv");
        if (campaign.keep_transcript) manifest.outputs.push_back("transcript.jsonl");
        auto files = scenario::write_report(dir, report, rows, manifest);
        std::cout << "wrote " << files.summary.string() << '\n';
        std::cout << "wrote " << files.histogram.string() << '\n';
        if (!files.bound_check.empty()) std::cout << "wrote " << files.bound_check.string() << '\n';
        if (!files.transcript.empty()) std::cout << "wrote " << files.transcript.string() << '\n';
    } else {
        std::cout << scenario::summary_json(report, manifest) << '\n';
    }

    if (args.assert_bounds) {
        for (const auto& row : rows) {
            if (!row.pass) {
                std::cerr << "bound violated at eta=" << scenario::format_double(row.eta)
                          << ": empirical " << scenario::format_double(row.empirical)
                          << " > bound " << scenario::format_double(row.bound) << " + 3 sigma\n";
                return kExitAssert;
            }
        }
    }
    return kExitOk;
}

struct RefineArgs {
    bool worst_case = false;
    bool zipf_gain = false;
    std::string strategy;
    std::string base_rate;
    std::string d;
    std::string d_sweep;
    double p = 1.2;
    std::string utilities;
    uint64_t population = 0;
    uint64_t pop_seed = 1;
    double zipf_a = 1.2;
    double deadline = 1.0;
    double penalty = 1.0;
    bool uncapped = false;
    std::string out;
};

std::vector<refine::ClientUtility> load_utilities(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("cannot open utility table: " + path);
    std::string line;
    if (!std::getline(in, line) || line.rfind("# sortition-utilities v1", 0) != 0)
        throw std::invalid_argument("utility table must start with \"# sortition-utilities v1\"");
    std::vector<refine::ClientUtility> out;
    bool header_seen = false;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            if (line != "client_id,latency,dataset_size,loss_rms")
                throw std::invalid_argument("unexpected utility table columns: " + line);
            header_seen = true;
            continue;
        }
        std::istringstream row(line);
        std::string field;
        refine::ClientUtility u;
        if (!std::getline(row, field, ',')) break;
        u.client_id = std::stoull(field);
        if (!std::getline(row, field, ',')) throw std::invalid_argument("short row: " + line);
        u.latency = std::stod(field);
        if (!std::getline(row, field, ',')) throw std::invalid_argument("short row: " + line);
        u.dataset_size = std::stoull(field);
        if (!std::getline(row, field, ',')) throw std::invalid_argument("short row: " + line);
        u.loss_rms = std::stod(field);
        out.push_back(u);
    }
    if (out.empty()) throw std::invalid_argument("utility table has no rows");
    return out;
}

int cmd_refine(const RefineArgs& args) {
    int modes = args.worst_case + args.zipf_gain + (!args.strategy.empty() ? 1 : 0);
    if (modes != 1) {
        std::cerr << "error: pick exactly one of --worst-case, --zipf-gain, --strategy\n";
        return kExitUsage;
    }
    scenario::RunManifest manifest;
    manifest.subcommand = "refine";
    if (!args.out.empty())
        manifest.outputs.push_back(std::filesystem::path(args.out).filename().string());
    Sink sink(args.out);
    std::ostream& os = sink.os();

    std::vector<Ratio> ds;
    if (!args.d_sweep.empty()) ds = parse_sweep(args.d_sweep);
    else if (!args.d.empty()) ds.push_back(Ratio::from_decimal(args.d));

    if (args.worst_case) {
        if (args.base_rate.empty() || ds.empty()) {
            std::cerr << "error: --worst-case needs --base-rate and --d or --d-sweep\n";
            return kExitUsage;
        }
        Ratio base = Ratio::from_decimal(args.base_rate);
        manifest.add("mode", "worst-case");
        manifest.add("base_rate", base.str());
        csv_header(os, "sortition-refine", manifest);
        os << "d,rate,log10_rate\n";
        for (const Ratio& d : ds) {
            if (d.num >= d.den) throw std::invalid_argument("d must be below 1");
            // base / (1 - d), clamped to 1: the closed-form worst case
            mpq_class rate = base.to_mpq() / (mpq_class(1) - d.to_mpq());
            rate.canonicalize();
            if (rate > 1) rate = 1;
            double v = rate.get_d();
            os << d.str() << ',' << scenario::format_double(v) << ','
               << scenario::format_log10(v) << '\n';
        }
        return kExitOk;
    }

    if (args.zipf_gain) {
        if (ds.empty()) {
            std::cerr << "error: --zipf-gain needs --d or --d-sweep\n";
            return kExitUsage;
        }
        manifest.add("mode", "zipf-gain");
        manifest.add("p", scenario::format_double(args.p));
        csv_header(os, "sortition-refine", manifest);
        os << "d,p,gain,log10_gain\n";
        for (const Ratio& d : ds) {
            double gain = refine::zipf_quality_gain(d.value(), args.p);
            os << d.str() << ',' << scenario::format_double(args.p) << ','
               << scenario::format_double(gain) << ',' << scenario::format_log10(gain) << '\n';
        }
        return kExitOk;
    }

    // --strategy
    if (ds.size() != 1) {
        std::cerr << "error: --strategy needs exactly one --d\n";
        return kExitUsage;
    }
    refine::RefineParams params;
    params.strategy = refine::strategy_by_name(args.strategy);
    params.exclusion = ds[0];
    params.deadline = args.deadline;
    params.penalty = args.penalty;
    params.capped = !args.uncapped;

    std::vector<refine::ClientUtility> utilities;
    if (!args.utilities.empty()) {
        utilities = load_utilities(args.utilities);
        manifest.add("utilities", args.utilities);
    } else if (args.population > 0) {
        std::vector<uint64_t> ids(args.population);
        for (uint64_t i = 0; i < args.population; ++i) ids[i] = i + 1;
        utilities = refine::synth_population(ids, args.pop_seed, args.zipf_a);
        manifest.add("population", args.population);
        manifest.add("pop_seed", args.pop_seed);
        manifest.add("zipf_a", scenario::format_double(args.zipf_a));
    } else {
        std::cerr << "error: --strategy needs --utilities FILE or --population N\n";
        return kExitUsage;
    }

    manifest.add("mode", "strategy");
    manifest.add("strategy", args.strategy);
    manifest.add("d", ds[0].str());
    manifest.add("deadline", scenario::format_double(args.deadline));
    manifest.add("penalty", scenario::format_double(args.penalty));
    manifest.add("capped", params.capped ? "true" : "false");

    std::vector<uint64_t> excluded = refine::select_excluded(utilities, params);
    csv_header(os, "sortition-refine", manifest);
    os << "excluded_client_id\n";
    for (uint64_t id : excluded) os << id << '\n';
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"participant selection bounds, simulations, and refinement analytics"};
    app.require_subcommand(1);

    BoundsArgs bounds_args;
    CLI::App* bounds_cmd = app.add_subcommand("bounds", "closed-form security bounds as CSV");
    bounds_cmd->add_flag("--theorem1", bounds_args.theorem1,
                         "Pr[x > eta*s] bound for the dishonest fraction");
    bounds_cmd->add_flag("--secagg", bounds_args.secagg, "aggregation privacy failure bound");
    bounds_cmd->add_flag("--overselect", bounds_args.overselect, "round success probability");
    bounds_cmd->add_flag("--exposure", bounds_args.exposure, "multi-round exposure p_k");
    bounds_cmd->add_flag("--repeat-client", bounds_args.repeat_client,
                         "repeat-participation bound, client-drawn randomness");
    bounds_cmd->add_flag("--repeat-server", bounds_args.repeat_server,
                         "repeat-participation bound, server-drawn randomness");
    bounds_cmd->add_flag("--epsilon", bounds_args.epsilon, "distributed-DP epsilon scan");
    bounds_cmd->add_option("--n-min", bounds_args.n_min, "population floor");
    bounds_cmd->add_option("--n", bounds_args.n, "population size");
    bounds_cmd->add_option("--n-max", bounds_args.n_max, "population cap (server repeat bound)");
    bounds_cmd->add_option("--c", bounds_args.c, "dishonest client count");
    bounds_cmd->add_option("--s", bounds_args.s, "participants per round");
    bounds_cmd->add_option("--alpha", bounds_args.alpha, "over-selection factor, decimal string");
    bounds_cmd->add_option("--alpha-sweep", bounds_args.alpha_sweep, "lo:hi:step");
    bounds_cmd->add_option("--eta", bounds_args.eta, "dishonest fraction tolerance");
    bounds_cmd->add_option("--eta-sweep", bounds_args.eta_sweep, "lo:hi:step");
    bounds_cmd->add_option("--t", bounds_args.t, "aggregation reconstruction threshold");
    bounds_cmd->add_option("--k", bounds_args.k, "dishonest participant tolerance");
    bounds_cmd->add_option("--rounds", bounds_args.rounds, "training rounds R");
    bounds_cmd->add_option("--r", bounds_args.r, "per-client participation tolerance");
    bounds_cmd->add_option("--delta", bounds_args.delta, "DP delta");
    bounds_cmd->add_option("--sigma", bounds_args.sigma, "noise multiplier");
    bounds_cmd->add_option("--accountant", bounds_args.accountant,
                           "mock | gaussian | constant");
    bounds_cmd->add_option("--accountant-value", bounds_args.accountant_value,
                           "epsilon for the constant accountant");
    bounds_cmd->add_option("--variant", bounds_args.variant, "client | server");
    bounds_cmd->add_option("--out", bounds_args.out, "CSV path (default stdout)");

    SimulateArgs sim_args;
    CLI::App* sim_cmd = app.add_subcommand("simulate", "Monte Carlo protocol campaign");
    sim_cmd->add_option("scenario", sim_args.scenario_path, "scenario JSON file")
        ->required()
        ->check(CLI::ExistingFile);
    auto* out_opt = sim_cmd->add_option("--out", sim_args.out, "report directory");
    sim_cmd->add_option("--seed", sim_args.seed, "override the scenario seed");
    sim_cmd->add_option("--trials", sim_args.trials, "override the trial count");
    sim_cmd->add_option("--workers", sim_args.workers, "override the worker count");
    sim_cmd->add_flag("--dump-transcript", sim_args.dump_transcript,
                      "write transcript.jsonl next to the report")
        ->needs(out_opt);
    sim_cmd->add_flag("--assert-bounds", sim_args.assert_bounds,
                      "exit 3 if the empirical exceedance breaks the analytic bound");
    sim_cmd->add_option("--eta", sim_args.etas, "tolerances for the bound check");

    RefineArgs refine_args;
    CLI::App* refine_cmd = app.add_subcommand("refine", "refinement analytics as CSV");
    refine_cmd->add_flag("--worst-case", refine_args.worst_case,
                         "worst-case dishonest base rate after exclusion");
    refine_cmd->add_flag("--zipf-gain", refine_args.zipf_gain,
                         "quality gain under the Zipf latency profile");
    refine_cmd->add_option("--strategy", refine_args.strategy, "or | and | joint");
    refine_cmd->add_option("--base-rate", refine_args.base_rate, "c/n, decimal string");
    refine_cmd->add_option("--d", refine_args.d, "excluded fraction, decimal string");
    refine_cmd->add_option("--d-sweep", refine_args.d_sweep, "lo:hi:step");
    refine_cmd->add_option("--p", refine_args.p, "Zipf exponent");
    refine_cmd->add_option("--utilities", refine_args.utilities, "utility table CSV");
    refine_cmd->add_option("--population", refine_args.population, "synthetic population size");
    refine_cmd->add_option("--pop-seed", refine_args.pop_seed, "synthetic population seed");
    refine_cmd->add_option("--zipf-a", refine_args.zipf_a, "synthetic latency shape");
    refine_cmd->add_option("--deadline", refine_args.deadline, "utility score deadline");
    refine_cmd->add_option("--penalty", refine_args.penalty, "lateness penalty exponent");
    refine_cmd->add_flag("--uncapped", refine_args.uncapped, "skip the union cap");
    refine_cmd->add_option("--out", refine_args.out, "CSV path (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (bounds_cmd->parsed()) return cmd_bounds(bounds_args);
        if (sim_cmd->parsed()) return cmd_simulate(sim_args);
        if (refine_cmd->parsed()) return cmd_refine(refine_args);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    return kExitUsage;
}
