// hllsh: plan, build, query and verify High-Low LSH indexes from the shell.
//
// Exit codes: 0 ok, 1 verification failure, 2 usage or input error,
// 3 resource error (capacity, I/O).

#include "hllsh/hllsh.hpp"

#include "CLI11.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

using hllsh::json;

constexpr int kExitOk = 0;
constexpr int kExitVerify = 1;
constexpr int kExitUsage = 2;
constexpr int kExitResource = 3;

struct ResourceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Global {
    std::uint64_t seed = 1;
    std::string threads;
    std::string output;
    std::string format;
};

// Probabilities given directly, as exponents of n, or as thresholds in the
// family's own units.
struct Thresholds {
    std::optional<double> p1, p2, p1_exp, p2_exp, s1, s2;

    void add_to(CLI::App* cmd, bool with_family_units) {
        cmd->add_option("--p1", p1, "near collision probability");
        cmd->add_option("--p2", p2, "far collision probability");
        cmd->add_option("--p1-exp", p1_exp, "p1 = n^-e");
        cmd->add_option("--p2-exp", p2_exp, "p2 = n^-e");
        if (with_family_units) {
            cmd->add_option("--s1", s1, "near threshold in family units (Jaccard, Hamming radius or angle)");
            cmd->add_option("--s2", s2, "far threshold in family units");
        }
    }

    std::pair<double, double> resolve(std::uint64_t n, const std::optional<hllsh::HashFamilySpec>& family) const {
        const double log_n = std::log(static_cast<double>(n));
        auto pick = [&](const std::optional<double>& lit, const std::optional<double>& ex, const char* name) {
            if (lit && ex) {
                throw hllsh::InvalidParameter(std::string("give either --") + name + " or --" + name + "-exp");
            }
            return lit ? *lit : std::exp(-*ex * log_n);
        };
        const bool have_probs = p1 || p2 || p1_exp || p2_exp;
        if (have_probs && (s1 || s2)) {
            throw hllsh::InvalidParameter("mix of probability flags and --s1/--s2");
        }
        if (have_probs) {
            if (!(p1 || p1_exp) || !(p2 || p2_exp)) {
                throw hllsh::InvalidParameter("both a p1 and a p2 flag are required");
            }
            return {pick(p1, p1_exp, "p1"), pick(p2, p2_exp, "p2")};
        }
        if (s1 && s2) {
            if (!family) {
                throw hllsh::InvalidParameter("--s1/--s2 need --family");
            }
            return hllsh::similarity_to_thresholds(*family, *s1, *s2);
        }
        throw hllsh::InvalidParameter("missing thresholds: use --p1/--p2, --p1-exp/--p2-exp or --family with --s1/--s2");
    }
};

unsigned parse_threads(const std::string& flag) {
    std::string v = flag;
    if (v.empty()) {
        const char* env = std::getenv("HLLSH_THREADS");
        v = env ? env : "auto";
    }
    if (v == "auto") {
        return 0;
    }
    try {
        std::size_t used = 0;
        const long t = std::stol(v, &used);
        if (used == v.size() && t >= 1 && t <= 4096) {
            return static_cast<unsigned>(t);
        }
    } catch (const std::exception&) {
    }
    throw hllsh::InvalidParameter("--threads must be a positive integer or \"auto\", got '" + v + "'");
}

/// Primary output: --output when set, stdout otherwise.
class Sink {
public:
    explicit Sink(const std::string& path) {
        if (!path.empty()) {
            file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
            if (!*file_) {
                throw ResourceError("cannot open '" + path + "' for writing");
            }
        }
    }
    std::ostream& os() { return file_ ? *file_ : std::cout; }
    void close() {
        if (file_) {
            file_->close();
            if (!*file_) {
                throw ResourceError("write failed");
            }
        }
    }

private:
    std::unique_ptr<std::ofstream> file_;
};

void print_seed(std::uint64_t seed) {
    std::cerr << "seed: " << seed << "\n";
}

std::string format_or(const Global& g, const std::string& fallback) {
    return g.format.empty() ? fallback : g.format;
}

std::ifstream open_input(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw hllsh::InvalidParameter("cannot read '" + path + "'");
    }
    return in;
}

std::string fmt(double v, int precision = 6) {
    std::ostringstream os;
    os << std::setprecision(precision) << v;
    return os.str();
}

// ---- plan ------------------------------------------------------------------

struct PlanArgs {
    std::uint64_t n = 0;
    Thresholds th;
    std::optional<std::string> family;
    std::uint32_t dim = 0;
    int repetitions = hllsh::kDefaultRepetitions;
    bool no_fallback = false;
};

std::string describe_layout(const hllsh::TablePlan& p) {
    std::ostringstream os;
    if (p.num_high > 0) {
        os << p.num_high << " x k=" << p.high_len;
    }
    if (p.num_low > 0) {
        os << (p.num_high > 0 ? " + " : "") << p.num_low << " x k=" << p.low_len;
    }
    return os.str();
}

int cmd_plan(const Global& g, const PlanArgs& a) {
    std::optional<hllsh::HashFamilySpec> family;
    if (a.family) {
        family = hllsh::HashFamilySpec{hllsh::parse_family_kind(*a.family), a.dim, 0};
    }
    const auto [p1, p2] = a.th.resolve(a.n, family);
    const hllsh::SensitivityProfile prof = hllsh::derive_profile(p1, p2, a.n);
    hllsh::TablePlan classic = hllsh::plan_classic(prof);
    classic.repetitions = a.repetitions;
    const hllsh::TablePlan high_low =
        hllsh::plan_high_low(prof, {.fallback_to_classic = !a.no_fallback, .repetitions = a.repetitions});
    const double classic_bound = hllsh::classic_bound(prof);
    const double high_low_bound = hllsh::high_low_bound(prof);
    const double table_ratio =
        static_cast<double>(classic.total_tables()) / static_cast<double>(high_low.total_tables());

    const std::string format = format_or(g, "text");
    Sink sink(g.output);
    std::ostream& out = sink.os();
    if (format == "json") {
        json j = {
            {"n", a.n},
            {"p1", p1},
            {"p2", p2},
            {"rho", prof.rho},
            {"kappa", prof.kappa},
            {"alpha", prof.alpha},
            {"a_real", high_low.a_real},
            {"b_real", high_low.b_real},
            {"classic_bound", classic_bound},
            {"high_low_bound", high_low_bound},
            {"savings_factor", classic_bound / high_low_bound},
            {"table_ratio", table_ratio},
            {"classic", classic},
            {"high_low", high_low},
        };
        out << j.dump(2) << "\n";
    } else if (format == "csv") {
        out << "mode,total_tables,num_high,high_len,num_low,low_len,a_real,b_real,predicted_far_candidates,"
               "predicted_single_success,predicted_repeated_success,bound\n";
        for (const hllsh::TablePlan* p : std::vector<const hllsh::TablePlan*>{&classic, &high_low}) {
            out << (p == &classic ? "classic" : "high_low") << "," << p->total_tables() << "," << p->num_high << ","
                << p->high_len << "," << p->num_low << "," << p->low_len << "," << fmt(p->a_real, 12) << ","
                << fmt(p->b_real, 12) << "," << fmt(p->predicted_far_candidates, 12) << ","
                << fmt(p->predicted_single_success, 12) << "," << fmt(p->predicted_repeated_success(), 12) << ","
                << fmt(p == &classic ? classic_bound : high_low_bound, 12) << "\n";
        }
    } else {
        out << "n=" << a.n << "  p1=" << fmt(p1) << "  p2=" << fmt(p2) << "\n"
            << "rho=" << fmt(prof.rho) << "  kappa=" << fmt(prof.kappa) << "  alpha=" << fmt(prof.alpha) << "\n\n"
            << "classic:   " << classic.total_tables() << " tables (" << describe_layout(classic) << ")\n"
            << "           bound n^rho/p1 = " << fmt(classic_bound) << "\n"
            << "high-low:  " << high_low.total_tables() << " tables (" << describe_layout(high_low) << ")";
        if (high_low.mode == hllsh::PlanMode::Classic) {
            out << "  [classic layout is cheaper here]";
        }
        out << "\n"
            << "           a=" << fmt(high_low.a_real, 10) << "  b=" << fmt(high_low.b_real, 10) << "\n"
            << "           bound n^rho p1^(rho-1) = " << fmt(high_low_bound) << "\n\n"
            << "savings factor p1^-rho = " << fmt(classic_bound / high_low_bound)
            << "  (tables: " << fmt(table_ratio) << "x)\n"
            << "expected far candidates: classic " << fmt(classic.predicted_far_candidates) << ", high-low "
            << fmt(high_low.predicted_far_candidates) << "\n"
            << "success per structure:   classic " << fmt(classic.predicted_single_success) << ", high-low "
            << fmt(high_low.predicted_single_success) << "  (x" << a.repetitions << ": "
            << fmt(high_low.predicted_repeated_success()) << ")\n";
    }
    sink.close();
    return kExitOk;
}

// ---- build -----------------------------------------------------------------

struct BuildArgs {
    std::string input;
    std::string family = "minhash";
    std::uint32_t dim = 0;
    std::uint64_t n = 0;
    Thresholds th;
    std::string mode = "high_low";
    int repetitions = hllsh::kDefaultRepetitions;
    bool no_fallback = false;
    std::string out;
};

json stats_json(const hllsh::IndexStats& s) {
    json by_len = json::object();
    for (const auto& [len, count] : s.tables_by_length) {
        by_len[std::to_string(len)] = count;
    }
    json hist = json::object();
    for (const auto& [size, count] : s.occupancy_histogram) {
        hist[std::to_string(size)] = count;
    }
    return {
        {"repetitions", s.repetitions},
        {"tables_per_repetition", s.tables_per_repetition},
        {"tables_by_length", by_len},
        {"points", s.points},
        {"total_buckets", s.total_buckets},
        {"stored_ids", s.stored_ids},
        {"memory_bytes", s.memory_bytes},
        {"occupancy_histogram", hist},
        {"a_real", s.a_real},
        {"b_real", s.b_real},
        {"predicted_far_candidates", s.predicted_far_candidates},
        {"predicted_single_success", s.predicted_single_success},
        {"predicted_repeated_success", s.predicted_repeated_success},
    };
}

int cmd_build(const Global& g, const BuildArgs& a) {
    const hllsh::FamilyKind kind = hllsh::parse_family_kind(a.family);
    std::uint32_t dim = a.dim;
    std::vector<hllsh::DataPoint> points;
    {
        std::ifstream in = open_input(a.input);
        points = hllsh::read_jsonl(in, kind, dim);
    }
    const hllsh::HashFamilySpec family{kind, dim, g.seed};
    const std::uint64_t n = a.n != 0 ? a.n : std::max<std::uint64_t>(points.size(), 2);
    const auto [p1, p2] = a.th.resolve(n, family);
    const hllsh::SensitivityProfile prof = hllsh::derive_profile(p1, p2, n);

    hllsh::TablePlan plan;
    if (a.mode == "classic") {
        plan = hllsh::make_plan(prof, hllsh::PlanMode::Classic, a.repetitions);
    } else {
        plan = hllsh::plan_high_low(prof, {.fallback_to_classic = !a.no_fallback, .repetitions = a.repetitions});
    }
    print_seed(g.seed);
    const hllsh::IndexSet set =
        hllsh::build(plan, family, std::move(points), hllsh::derive_seed(g.seed, 1), {.threads = parse_threads(g.threads)});
    {
        std::ofstream f(a.out, std::ios::binary);
        if (!f) {
            throw ResourceError("cannot open '" + a.out + "' for writing");
        }
        hllsh::write_index(f, set);
        f.close();
        if (!f) {
            throw ResourceError("failed writing '" + a.out + "'");
        }
    }

    const hllsh::IndexStats s = hllsh::stats(set);
    Sink sink(g.output);
    std::ostream& out = sink.os();
    if (format_or(g, "text") == "json") {
        json j = stats_json(s);
        j["plan"] = plan;
        j["index"] = a.out;
        out << j.dump(2) << "\n";
    } else {
        out << "wrote " << a.out << "\n"
            << "mode " << hllsh::to_string(plan.mode) << ", " << s.repetitions << " repetitions x "
            << s.tables_per_repetition << " tables (" << describe_layout(plan) << ")\n"
            << "points " << s.points << ", buckets " << s.total_buckets << ", stored ids " << s.stored_ids
            << ", ~" << s.memory_bytes << " bytes\n"
            << "a=" << fmt(s.a_real, 10) << " b=" << fmt(s.b_real, 10) << ", expected far candidates "
            << fmt(s.predicted_far_candidates) << ", success " << fmt(s.predicted_single_success) << " (x"
            << s.repetitions << ": " << fmt(s.predicted_repeated_success) << ")\n";
    }
    sink.close();
    return kExitOk;
}

// ---- query -----------------------------------------------------------------

struct QueryArgs {
    std::string index;
    std::string queries;
    std::optional<double> r2;
    std::optional<double> s1;
    std::optional<std::string> family;
    bool exhaustive = false;
};

// Threshold in family units to the family's distance scale.
double threshold_distance(const hllsh::HashFamilySpec& f, double t) {
    return f.kind == hllsh::FamilyKind::MinHash ? 1.0 - t : t;
}

int cmd_query(const Global& g, const QueryArgs& a) {
    if (a.r2 && a.s1) {
        throw hllsh::InvalidParameter("give either --r2 or --s1");
    }
    hllsh::IndexSet set = [&] {
        std::ifstream in = open_input(a.index);
        return hllsh::read_index(in);
    }();
    const hllsh::HashFamilySpec& family = set.family();
    if (a.family && hllsh::parse_family_kind(*a.family) != family.kind) {
        throw hllsh::KindMismatch("index holds " + hllsh::to_string(family.kind) + " points, not " + *a.family);
    }
    double r2 = hllsh::probability_to_distance(family, set.plan().p2);
    if (a.r2) {
        r2 = *a.r2;
    } else if (a.s1) {
        // points at least as close as the near threshold qualify
        r2 = std::nextafter(threshold_distance(family, *a.s1), std::numeric_limits<double>::infinity());
    }

    std::uint32_t dim = family.dimension;
    std::vector<hllsh::DataPoint> queries;
    {
        std::ifstream in = open_input(a.queries);
        queries = hllsh::read_jsonl(in, family.kind, dim);
    }

    Sink sink(g.output);
    std::ostream& out = sink.os();
    std::size_t found = 0;
    for (std::size_t i = 0; i < queries.size(); ++i) {
        hllsh::QueryResult r;
        try {
            r = hllsh::query(set, queries[i], r2, {.stop_at_first = !a.exhaustive});
        } catch (const hllsh::KindMismatch& e) {
            throw hllsh::FormatError(std::string("query ") + queries[i].id + ": " + e.what(), i + 1);
        }
        json j = {
            {"query_id", queries[i].id},
            {"outcome", r.found() ? "Found" : "NotFound"},
        };
        if (r.found()) {
            ++found;
            j["id"] = set.points()[r.point_index].id;
            j["distance"] = r.distance;
            j["repetition"] = r.found_repetition;
            j["table"] = r.found_table;
        }
        j["tables_probed"] = r.tables_probed;
        j["candidates_examined"] = r.candidates_examined;
        j["far_candidates_examined"] = r.far_candidates_examined;
        j["distance_computations"] = r.distance_computations;
        out << j.dump() << "\n";
    }
    sink.close();
    std::cerr << found << "/" << queries.size() << " queries found a point at distance < " << fmt(r2, 10) << "\n";
    return kExitOk;
}

// ---- verify ----------------------------------------------------------------

struct VerifyArgs {
    std::size_t samples = 10000;
    std::string csv;
    std::size_t show = 20;
};

void write_tightness_csv(std::ostream& out, const hllsh::TightnessReport& t) {
    out << "p1,p2,n,rho,kappa,alpha,f_alpha,f_alpha_star,exp_divergence,bound,ratio,weak_log_bound,max_ratio\n";
    for (const auto& r : t.rows) {
        out << fmt(r.p1, 17) << "," << fmt(r.p2, 17) << "," << r.n << "," << fmt(r.rho, 17) << ","
            << fmt(r.kappa, 17) << "," << fmt(r.alpha, 17) << "," << fmt(r.f_alpha, 17) << ","
            << fmt(r.f_alpha_star, 17) << "," << fmt(r.exp_divergence, 17) << "," << fmt(r.bound, 17) << ","
            << fmt(r.ratio, 17) << ",";
        if (!std::isnan(r.weak_log_bound)) {
            out << fmt(r.weak_log_bound, 17);
        }
        out << "," << fmt(t.max_ratio, 17) << "\n";
    }
}

int cmd_verify(const Global& g, const VerifyArgs& a) {
    if (a.samples < 100) {
        throw hllsh::InvalidParameter("--samples must be at least 100");
    }
    print_seed(g.seed);
    const hllsh::VerificationReport rep = hllsh::run_verification(a.samples, g.seed);

    if (!a.csv.empty()) {
        std::ofstream f(a.csv, std::ios::binary);
        if (!f) {
            throw ResourceError("cannot open '" + a.csv + "' for writing");
        }
        write_tightness_csv(f, rep.tightness);
    }

    const std::string format = format_or(g, "text");
    Sink sink(g.output);
    std::ostream& out = sink.os();
    if (format == "csv") {
        write_tightness_csv(out, rep.tightness);
    } else if (format == "json") {
        json suites = json::array();
        for (const auto& s : rep.suites) {
            suites.push_back({{"name", s.name}, {"checks", s.checks}, {"violations", s.violations.size()}});
        }
        out << json{{"samples", a.samples},
                    {"seed", g.seed},
                    {"suites", suites},
                    {"tightness",
                     {{"rows", rep.tightness.rows.size()},
                      {"hard_violations", rep.tightness.hard_violations},
                      {"min_ratio", rep.tightness.min_ratio},
                      {"max_ratio", rep.tightness.max_ratio},
                      {"exceeds_soft_limit", rep.tightness.exceeds_soft_limit}}},
                    {"total_violations", rep.total_violations()},
                    {"ok", rep.ok()}}
                   .dump(2)
            << "\n";
    } else {
        for (const auto& s : rep.suites) {
            out << std::left << std::setw(18) << s.name << " checks " << std::setw(8) << s.checks << " violations "
                << s.violations.size() << "\n";
        }
        out << std::left << std::setw(18) << "tightness"
            << " checks " << std::setw(8) << rep.tightness.rows.size() << " violations "
            << rep.tightness.hard_violations << "\n"
            << "bound / exp(D) ratio in [" << fmt(rep.tightness.min_ratio) << ", " << fmt(rep.tightness.max_ratio)
            << "]" << (rep.tightness.exceeds_soft_limit ? "  (above the 2.05 soft limit)" : "") << "\n"
            << (rep.ok() ? "ok" : "FAILED") << "\n";
    }
    sink.close();

    std::size_t shown = 0;
    for (const auto& s : rep.suites) {
        for (const auto& v : s.violations) {
            if (shown++ < a.show) {
                std::cerr << "violation " << v.check << ": p1=" << fmt(v.p1, 17) << " p2=" << fmt(v.p2, 17)
                          << " alpha=" << fmt(v.alpha, 17) << " n=" << v.n << "  " << v.detail << "\n";
            }
        }
    }
    for (const auto& r : rep.tightness.rows) {
        if (r.ratio < 1.0 - 1e-12 && shown++ < a.show) {
            std::cerr << "violation tightness: p1=" << fmt(r.p1, 17) << " p2=" << fmt(r.p2, 17)
                      << " alpha=" << fmt(r.alpha, 17) << " n=" << r.n << "\n";
        }
    }
    return rep.ok() ? kExitOk : kExitVerify;
}

// ---- bench / savings-grid --------------------------------------------------

struct BenchArgs {
    std::string family = "minhash";
    std::uint64_t n = 4096;
    double s1 = 0.5;
    double s2 = 0.1;
    std::size_t trials = 500;
    std::string mode = "high_low";
    int repetitions = hllsh::kDefaultRepetitions;
    bool no_fallback = false;
    std::uint32_t dim = 64;
    std::uint32_t base_set_size = 100;
    bool no_timing = false;
};

int cmd_bench(const Global& g, const BenchArgs& a) {
    hllsh::ExperimentConfig cfg;
    cfg.kind = hllsh::parse_family_kind(a.family);
    cfg.n = a.n;
    cfg.s1 = a.s1;
    cfg.s2 = a.s2;
    cfg.trials = a.trials;
    cfg.mode = a.mode == "classic" ? hllsh::PlanMode::Classic : hllsh::PlanMode::HighLow;
    cfg.repetitions = a.repetitions;
    cfg.allow_fallback = !a.no_fallback;
    cfg.seed = g.seed;
    cfg.threads = parse_threads(g.threads);
    cfg.planted = {.base_set_size = a.base_set_size, .dimension = a.dim};
    print_seed(g.seed);
    const hllsh::BenchReport rep = hllsh::run_success_experiment(cfg);

    const std::string format = format_or(g, "csv");
    Sink sink(g.output);
    std::ostream& out = sink.os();
    if (format == "json") {
        out << hllsh::bench_to_json(rep, !a.no_timing).dump(2) << "\n";
    } else if (format == "csv") {
        hllsh::write_bench_csv(out, rep, !a.no_timing);
    } else {
        for (const auto& [k, v] : hllsh::bench_fields(rep, !a.no_timing)) {
            out << std::left << std::setw(30) << k << hllsh::detail::csv_cell(v) << "\n";
        }
    }
    sink.close();
    return kExitOk;
}

struct GridArgs {
    std::uint64_t n = 1'000'000;
    std::vector<double> p1_exps;
    std::vector<double> p2_exps;
};

int cmd_savings_grid(const Global& g, const GridArgs& a) {
    std::vector<double> grid;
    for (int k = 1; k < 24; ++k) {
        grid.push_back(k / 24.0);
    }
    const auto rows = hllsh::run_savings_experiment(a.n, a.p1_exps.empty() ? grid : a.p1_exps,
                                                    a.p2_exps.empty() ? grid : a.p2_exps);
    const std::string format = format_or(g, "csv");
    Sink sink(g.output);
    std::ostream& out = sink.os();
    if (format == "json") {
        out << hllsh::savings_to_json(rows).dump(2) << "\n";
    } else if (format == "csv") {
        hllsh::write_savings_csv(out, rows);
    } else {
        out << "saving exponent log_n(p1^-rho); rows p1 exponent, columns p2 exponent\n" << std::setw(8) << "";
        std::vector<double> cols;
        for (const auto& r : rows) {
            if (std::find(cols.begin(), cols.end(), r.cell.p2_exp) == cols.end()) {
                cols.push_back(r.cell.p2_exp);
            }
        }
        for (double c : cols) {
            out << std::setw(7) << std::fixed << std::setprecision(3) << c;
        }
        std::optional<double> row_key;
        for (const auto& r : rows) {
            if (!row_key || *row_key != r.cell.p1_exp) {
                row_key = r.cell.p1_exp;
                out << "\n" << std::setw(8) << std::fixed << std::setprecision(3) << r.cell.p1_exp;
            }
            if (r.cell.valid) {
                out << std::setw(7) << std::fixed << std::setprecision(3) << r.cell.saving_exp;
            } else {
                out << std::setw(7) << ".";
            }
        }
        out << "\n";
    }
    sink.close();
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"High-Low LSH: planner, index, verification and experiments"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_help_all_flag("--help-all", "show help for every subcommand");

    Global g;
    app.add_option("--seed", g.seed, "64-bit seed for every randomized step")->capture_default_str();
    app.add_option("--threads", g.threads, "worker threads, integer or \"auto\" (env HLLSH_THREADS)");
    app.add_option("--output", g.output, "write the primary output here instead of stdout");
    app.add_option("--format", g.format, "json, csv or text (default depends on the subcommand)")
        ->check(CLI::IsMember({"json", "csv", "text"}));

    PlanArgs plan;
    auto* plan_cmd = app.add_subcommand("plan", "compare the classic and high-low table layouts");
    plan_cmd->add_option("--n", plan.n, "number of points")->required()->check(CLI::Range(2ULL, ~0ULL));
    plan.th.add_to(plan_cmd, true);
    plan_cmd->add_option("--family", plan.family, "minhash, bit_sampling or hyperplane (with --s1/--s2)");
    plan_cmd->add_option("--dim", plan.dim, "bit count or vector dimension");
    plan_cmd->add_option("--repetitions", plan.repetitions, "independent structures")->check(CLI::PositiveNumber);
    plan_cmd->add_flag("--no-fallback", plan.no_fallback, "keep the high-low layout even when classic is cheaper");

    BuildArgs build;
    auto* build_cmd = app.add_subcommand("build", "index a JSONL dataset");
    build_cmd->add_option("--input", build.input, "JSONL points")->required();
    build_cmd->add_option("--family", build.family, "minhash, bit_sampling or hyperplane")->capture_default_str();
    build_cmd->add_option("--dim", build.dim, "bit count or vector dimension (0 infers from the first record)");
    build_cmd->add_option("--n", build.n, "capacity the plan is sized for (default: number of points)");
    build.th.add_to(build_cmd, true);
    build_cmd->add_option("--mode", build.mode, "classic or high_low")
        ->check(CLI::IsMember({"classic", "high_low"}))
        ->capture_default_str();
    build_cmd->add_option("--repetitions", build.repetitions, "independent structures")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    build_cmd->add_flag("--no-fallback", build.no_fallback, "keep the high-low layout even when classic is cheaper");
    build_cmd->add_option("--out", build.out, "index file to write")->required();

    QueryArgs query;
    auto* query_cmd = app.add_subcommand("query", "query an index with a JSONL batch; results are JSONL");
    query_cmd->add_option("--index", query.index, "index file")->required();
    query_cmd->add_option("--queries", query.queries, "JSONL queries")->required();
    query_cmd->add_option("--r2", query.r2, "report points at distance < r2 (default: the plan's far distance)");
    query_cmd->add_option("--s1", query.s1, "report points at least as close as this near threshold");
    query_cmd->add_option("--family", query.family, "expected family; mismatch is an error");
    query_cmd->add_flag("--exhaustive", query.exhaustive, "probe every table instead of stopping at the first hit");

    VerifyArgs verify;
    auto* verify_cmd = app.add_subcommand("verify", "run the randomized bound and lemma checks");
    verify_cmd->add_option("--samples", verify.samples, "random profiles (at least 100)")->capture_default_str();
    verify_cmd->add_option("--csv", verify.csv, "also write the tightness CSV here");
    verify_cmd->add_option("--show", verify.show, "violations to print")->capture_default_str();

    BenchArgs bench;
    auto* bench_cmd = app.add_subcommand("bench", "Monte-Carlo success and far-work experiment");
    bench_cmd->add_option("--family", bench.family, "minhash, bit_sampling or hyperplane")->capture_default_str();
    bench_cmd->add_option("--n", bench.n, "points per instance")->capture_default_str();
    bench_cmd->add_option("--s1", bench.s1, "near collision probability")->capture_default_str();
    bench_cmd->add_option("--s2", bench.s2, "far collision probability")->capture_default_str();
    bench_cmd->add_option("--trials", bench.trials, "build+query trials (at least 100)")->capture_default_str();
    bench_cmd->add_option("--mode", bench.mode, "classic or high_low")
        ->check(CLI::IsMember({"classic", "high_low"}))
        ->capture_default_str();
    bench_cmd->add_option("--repetitions", bench.repetitions, "independent structures")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    bench_cmd->add_flag("--no-fallback", bench.no_fallback, "keep the high-low layout even when classic is cheaper");
    bench_cmd->add_option("--dim", bench.dim, "bit count or vector dimension")->capture_default_str();
    bench_cmd->add_option("--base-set-size", bench.base_set_size, "starting MinHash query-set size")
        ->capture_default_str();
    bench_cmd->add_flag("--no-timing", bench.no_timing, "omit wall-clock fields");

    GridArgs grid;
    auto* grid_cmd = app.add_subcommand("savings-grid", "saving exponent over a grid of (p1, p2) exponents");
    grid_cmd->add_option("--n", grid.n, "number of points")->capture_default_str()->check(CLI::Range(2ULL, ~0ULL));
    grid_cmd->add_option("--p1-exps", grid.p1_exps, "p1 exponents (default k/24, k=1..23)")->delimiter(',');
    grid_cmd->add_option("--p2-exps", grid.p2_exps, "p2 exponents (default k/24, k=1..23)")->delimiter(',');

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (*plan_cmd) return cmd_plan(g, plan);
        if (*build_cmd) return cmd_build(g, build);
        if (*query_cmd) return cmd_query(g, query);
        if (*verify_cmd) return cmd_verify(g, verify);
        if (*bench_cmd) return cmd_bench(g, bench);
        if (*grid_cmd) return cmd_savings_grid(g, grid);
    } catch (const hllsh::CapacityExceeded& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitResource;
    } catch (const ResourceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitResource;
    } catch (const std::bad_alloc&) {
        std::cerr << "error: out of memory\n";
        return kExitResource;
    } catch (const hllsh::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}
