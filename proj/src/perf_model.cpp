#include "tracedvfs/perf_model.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "tracedvfs/csv.hpp"

namespace tracedvfs {

namespace {

/// Rounds through the 9-digit text form so a model equals its re-parsed file.
double round9(double x) { return std::strtod(format_number(x).c_str(), nullptr); }

std::string coords(std::size_t l, int i, int j) {
    return "(L=" + std::to_string(l) + ", i=" + std::to_string(i) + ", j=" + std::to_string(j) + ")";
}

}  // namespace

FrequencyVector max_frequencies(std::span<const NodeSpec> nodes) {
    FrequencyVector f;
    for (const auto& n : nodes) f.level.push_back(n.max_level());
    return f;
}

FrequencyVector min_frequencies(std::span<const NodeSpec> nodes) {
    return FrequencyVector{std::vector<int>(nodes.size(), 0)};
}

std::string to_string(const FrequencyVector& f) {
    std::string s = "(";
    for (std::size_t j = 0; j < f.level.size(); ++j) {
        if (j) s += ',';
        s += std::to_string(f.level[j]);
    }
    return s + ")";
}

double r_squared(std::span<const double> observed, std::span<const double> predicted) {
    if (observed.empty()) return 1.0;
    const double mean = std::accumulate(observed.begin(), observed.end(), 0.0) / static_cast<double>(observed.size());
    double ss_tot = 0.0;
    double ss_res = 0.0;
    for (std::size_t k = 0; k < observed.size(); ++k) {
        ss_tot += (observed[k] - mean) * (observed[k] - mean);
        ss_res += (observed[k] - predicted[k]) * (observed[k] - predicted[k]);
    }
    const double scale = std::max(1.0, mean * mean) * static_cast<double>(observed.size());
    if (ss_tot <= 1e-18 * scale) return 1.0;
    return 1.0 - ss_res / ss_tot;
}

QuadraticFit fit_quadratic(std::span<const double> f, std::span<const double> t) {
    if (f.size() != t.size()) throw ModelError("fit_quadratic: size mismatch");
    std::vector<double> distinct(f.begin(), f.end());
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.size() < 3) throw ModelError("fit_quadratic: need 3 distinct frequencies, got " + std::to_string(distinct.size()));

    const auto n = static_cast<Eigen::Index>(f.size());
    Eigen::MatrixXd a(n, 3);
    Eigen::VectorXd y(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const double x = f[static_cast<std::size_t>(k)];
        a(k, 0) = x * x;
        a(k, 1) = x;
        a(k, 2) = 1.0;
        y(k) = t[static_cast<std::size_t>(k)];
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    if (qr.rank() < 3) throw ModelError("fit_quadratic: rank-deficient system");
    const Eigen::Vector3d coef = qr.solve(y);

    QuadraticFit fit{coef(0), coef(1), coef(2), 1.0};
    std::vector<double> predicted;
    for (double x : f) predicted.push_back(fit(x));
    fit.r2 = r_squared(t, predicted);
    return fit;
}

std::size_t PerformanceModel::load_index(double load) const {
    for (std::size_t l = 0; l < load_levels.size(); ++l)
        if (load_levels[l] == load) return l;
    throw ModelError("unknown load level " + format_number(load));
}

const QuadraticFit& PerformanceModel::coef(std::size_t l, int i, int j) const {
    return coeffs.at(l).at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(j));
}

PerformanceModel fit_model(const ProfilingDataset& data, const FitOptions& options) {
    if (data.tier_count < 1 || data.pattern_count < 1 || data.load_levels.empty())
        throw ModelError("empty profiling dataset");
    const auto levels = data.load_levels.size();
    const auto n = static_cast<std::size_t>(data.pattern_count);
    const auto m = static_cast<std::size_t>(data.tier_count);

    PerformanceModel model;
    model.tier_count = data.tier_count;
    model.pattern_count = data.pattern_count;
    for (double l : data.load_levels) model.load_levels.push_back(round9(l));
    for (double c : data.pattern_centroids) model.pattern_centroids.push_back(round9(c));
    model.dominated_tiers = data.swept_tiers;
    model.coeffs.assign(levels, std::vector<std::vector<QuadraticFit>>(n, std::vector<QuadraticFit>(m)));
    model.gamma.assign(levels, std::vector<double>(n, 0.0));
    model.utilization.assign(levels, std::vector<double>(m, 0.0));

    auto swept = [&](int j) {
        return std::find(data.swept_tiers.begin(), data.swept_tiers.end(), j) != data.swept_tiers.end();
    };

    for (std::size_t l = 0; l < levels; ++l) {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < m; ++j) {
                const int ii = static_cast<int>(i);
                const int jj = static_cast<int>(j);
                QuadraticFit fit;
                if (swept(jj)) {
                    std::vector<double> xs;
                    std::vector<double> ys;
                    for (const auto& s : data.samples)
                        if (s.load_index == l && s.pattern == ii && s.tier == jj && s.swept_tier == jj) {
                            xs.push_back(s.freq_ghz);
                            ys.push_back(s.mean_service_us);
                        }
                    try {
                        fit = fit_quadratic(xs, ys);
                    } catch (const ModelError& e) {
                        throw ModelError(std::string(e.what()) + " at " + coords(l, ii, jj));
                    }
                } else {
                    double sum = 0.0;
                    std::size_t count = 0;
                    for (const auto& s : data.samples)
                        if (s.load_index == l && s.pattern == ii && s.tier == jj) {
                            sum += s.mean_service_us * static_cast<double>(s.count);
                            count += s.count;
                        }
                    if (count == 0) throw ModelError("no samples at " + coords(l, ii, jj));
                    fit = QuadraticFit{0.0, 0.0, sum / static_cast<double>(count), 1.0};
                }
                model.coeffs[l][i][j] = QuadraticFit{round9(fit.a), round9(fit.b), round9(fit.c), round9(fit.r2)};
            }
        }
    }

    double global_sum = 0.0;
    std::size_t global_count = 0;
    std::vector<std::vector<double>> gsum(levels, std::vector<double>(n, 0.0));
    std::vector<std::vector<std::size_t>> gcount(levels, std::vector<std::size_t>(n, 0));
    for (const auto& g : data.gamma_samples) {
        if (g.load_index >= levels || g.pattern < 0 || static_cast<std::size_t>(g.pattern) >= n) continue;
        gsum[g.load_index][static_cast<std::size_t>(g.pattern)] += g.mean_gap_us * static_cast<double>(g.count);
        gcount[g.load_index][static_cast<std::size_t>(g.pattern)] += g.count;
        global_sum += g.mean_gap_us * static_cast<double>(g.count);
        global_count += g.count;
    }
    const double global_gamma = global_count ? global_sum / static_cast<double>(global_count) : 0.0;
    for (std::size_t l = 0; l < levels; ++l)
        for (std::size_t i = 0; i < n; ++i) {
            double g = global_gamma;
            if (!options.global_gamma && gcount[l][i]) g = gsum[l][i] / static_cast<double>(gcount[l][i]);
            model.gamma[l][i] = round9(std::max(0.0, g));
        }

    std::vector<std::vector<std::size_t>> ucount(levels, std::vector<std::size_t>(m, 0));
    for (const auto& u : data.utilization_samples) {
        if (u.load_index >= levels || u.tier < 0 || static_cast<std::size_t>(u.tier) >= m) continue;
        model.utilization[u.load_index][static_cast<std::size_t>(u.tier)] += u.utilization;
        ++ucount[u.load_index][static_cast<std::size_t>(u.tier)];
    }
    for (std::size_t l = 0; l < levels; ++l)
        for (std::size_t j = 0; j < m; ++j)
            if (ucount[l][j]) model.utilization[l][j] = round9(model.utilization[l][j] / static_cast<double>(ucount[l][j]));
    return model;
}

std::vector<double> predict_latency_at(const PerformanceModel& model, std::size_t l, const FrequencyVector& f,
                                       std::span<const NodeSpec> nodes, int* clamped) {
    if (l >= model.load_levels.size()) throw ModelError("load index out of range");
    if (f.level.size() != static_cast<std::size_t>(model.tier_count) || nodes.size() != f.level.size())
        throw ModelError("frequency vector does not match tier count");
    std::vector<double> out(static_cast<std::size_t>(model.pattern_count), 0.0);
    for (int i = 0; i < model.pattern_count; ++i) {
        double d = model.gamma[l][static_cast<std::size_t>(i)];
        for (int j = 0; j < model.tier_count; ++j) {
            const auto& node = nodes[static_cast<std::size_t>(j)];
            const double ghz = node.freq_levels_ghz.at(static_cast<std::size_t>(f.level[static_cast<std::size_t>(j)]));
            const double t = model.coef(l, i, j)(ghz);
            if (t < 0.0) {
                if (clamped) ++*clamped;
                continue;
            }
            d += t;
        }
        out[static_cast<std::size_t>(i)] = d;
    }
    return out;
}

std::vector<double> predict_latency(const PerformanceModel& model, double load, const FrequencyVector& f,
                                    std::span<const NodeSpec> nodes, int* clamped) {
    return predict_latency_at(model, model.load_index(load), f, nodes, clamped);
}

double predicted_power(std::span<const NodeSpec> nodes, std::span<const double> utilization_at_max,
                       const FrequencyVector& f) {
    double total = 0.0;
    for (std::size_t j = 0; j < nodes.size(); ++j) {
        const auto& node = nodes[j];
        const double ghz = node.freq_levels_ghz.at(static_cast<std::size_t>(f.level[j]));
        const double u = std::min(1.0, utilization_at_max[j] * node.max_freq() / ghz);
        total += node_power(node.power, ghz, node.max_freq(), u);
    }
    return total;
}

FrequencyVector fast_modulation(const PerformanceModel& model, std::size_t l, std::span<const double> thresholds,
                                std::span<const NodeSpec> nodes) {
    if (thresholds.size() > static_cast<std::size_t>(model.pattern_count))
        throw ModelError("more thresholds than modeled patterns");
    for (double th : thresholds)
        if (!(th > 0.0)) throw ModelError("thresholds must be positive");
    const auto m = nodes.size();
    FrequencyVector f{std::vector<int>(m, 0)};
    FrequencyVector best = max_frequencies(nodes);
    double best_power = std::numeric_limits<double>::infinity();
    while (true) {
        const auto d = predict_latency_at(model, l, f, nodes);
        bool feasible = true;
        for (std::size_t i = 0; i < thresholds.size() && feasible; ++i) feasible = d[i] <= thresholds[i];
        if (feasible) {
            const double p = predicted_power(nodes, model.utilization[l], f);
            if (p < best_power) {
                best_power = p;
                best = f;
            }
        }
        // Odometer with the last tier varying fastest.
        std::size_t j = m;
        while (j > 0) {
            --j;
            if (f.level[j] < nodes[j].max_level()) {
                ++f.level[j];
                break;
            }
            f.level[j] = 0;
            if (j == 0) return best;
        }
        if (m == 0) return best;
    }
}

std::vector<int> dominated_tiers(std::span<const double> percentages, double threshold) {
    if (percentages.empty()) throw std::invalid_argument("no tiers");
    std::vector<int> order(percentages.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return percentages[static_cast<std::size_t>(a)] > percentages[static_cast<std::size_t>(b)];
    });
    std::vector<int> out;
    for (int j : order)
        if (percentages[static_cast<std::size_t>(j)] >= threshold) out.push_back(j);
    if (out.empty()) out.push_back(order.front());
    return out;
}

// ---------------------------------------------------------------------------
// pre_model file

void write_pre_model(std::ostream& out, const PerformanceModel& model) {
    out << "PREMODEL v1 M=" << model.tier_count << " N=" << model.pattern_count << '\n';
    out << "LOADS";
    for (double l : model.load_levels) out << ' ' << format_number(l);
    out << '\n';
    out << "SWEPT";
    for (int j : model.dominated_tiers) out << ' ' << j;
    out << '\n';
    for (std::size_t i = 0; i < model.pattern_centroids.size(); ++i)
        out << "PATTERN " << i << ' ' << format_number(model.pattern_centroids[i]) << '\n';
    for (std::size_t l = 0; l < model.load_levels.size(); ++l)
        for (std::size_t j = 0; j < model.utilization[l].size(); ++j)
            out << "UTIL " << format_number(model.load_levels[l]) << ' ' << j << ' '
                << format_number(model.utilization[l][j]) << '\n';
    for (std::size_t l = 0; l < model.load_levels.size(); ++l)
        for (std::size_t i = 0; i < model.coeffs[l].size(); ++i)
            for (std::size_t j = 0; j < model.coeffs[l][i].size(); ++j) {
                const auto& c = model.coeffs[l][i][j];
                out << "COEF " << format_number(model.load_levels[l]) << ' ' << i << ' ' << j << ' '
                    << format_number(c.a) << ' ' << format_number(c.b) << ' ' << format_number(c.c) << ' '
                    << format_number(c.r2) << '\n';
            }
    for (std::size_t l = 0; l < model.load_levels.size(); ++l)
        for (std::size_t i = 0; i < model.gamma[l].size(); ++i)
            out << "GAMMA " << format_number(model.load_levels[l]) << ' ' << i << ' '
                << format_number(model.gamma[l][i]) << '\n';
}

std::string write_pre_model(const PerformanceModel& model) {
    std::ostringstream out;
    write_pre_model(out, model);
    return out.str();
}

namespace {

double parse_double(const std::string& token, int line) {
    char* end = nullptr;
    const double v = std::strtod(token.c_str(), &end);
    if (token.empty() || *end != '\0') throw ModelError("pre_model line " + std::to_string(line) + ": bad number '" + token + "'");
    return v;
}

int parse_int(const std::string& token, int line) {
    char* end = nullptr;
    const long v = std::strtol(token.c_str(), &end, 10);
    if (token.empty() || *end != '\0') throw ModelError("pre_model line " + std::to_string(line) + ": bad integer '" + token + "'");
    return static_cast<int>(v);
}

}  // namespace

PerformanceModel parse_pre_model(std::istream& in) {
    PerformanceModel model;
    std::string text;
    int line_no = 0;
    bool header = false;
    bool have_loads = false;
    std::vector<std::vector<std::vector<bool>>> seen;
    auto fail = [&](const std::string& what) { throw ModelError("pre_model line " + std::to_string(line_no) + ": " + what); };
    auto level_of = [&](const std::string& token) {
        if (!have_loads) fail("LOADS must precede per-load lines");
        const double v = parse_double(token, line_no);
        for (std::size_t l = 0; l < model.load_levels.size(); ++l)
            if (model.load_levels[l] == v) return l;
        fail("load " + token + " not in LOADS");
        return std::size_t{0};
    };
    auto index = [&](const std::string& token, int limit, const char* what) {
        const int v = parse_int(token, line_no);
        if (v < 0 || v >= limit) fail(std::string(what) + " index out of range");
        return static_cast<std::size_t>(v);
    };

    while (std::getline(in, text)) {
        ++line_no;
        if (!text.empty() && text.back() == '\r') text.pop_back();
        if (text.empty() || text.front() == '#') continue;
        std::istringstream ls(text);
        std::vector<std::string> tok;
        for (std::string t; ls >> t;) tok.push_back(t);
        if (tok.empty()) continue;
        if (!header) {
            if (tok.size() != 4 || tok[0] != "PREMODEL" || tok[1] != "v1" || tok[2].rfind("M=", 0) != 0 ||
                tok[3].rfind("N=", 0) != 0)
                fail("expected 'PREMODEL v1 M=<int> N=<int>'");
            model.tier_count = parse_int(tok[2].substr(2), line_no);
            model.pattern_count = parse_int(tok[3].substr(2), line_no);
            if (model.tier_count < 1 || model.pattern_count < 1) fail("M and N must be positive");
            header = true;
            continue;
        }
        const auto& kind = tok[0];
        const auto m = static_cast<std::size_t>(model.tier_count);
        const auto n = static_cast<std::size_t>(model.pattern_count);
        if (kind == "LOADS") {
            if (have_loads) fail("duplicate LOADS");
            for (std::size_t k = 1; k < tok.size(); ++k) model.load_levels.push_back(parse_double(tok[k], line_no));
            if (model.load_levels.empty()) fail("LOADS is empty");
            if (!std::is_sorted(model.load_levels.begin(), model.load_levels.end())) fail("LOADS must be ascending");
            have_loads = true;
            const auto levels = model.load_levels.size();
            model.coeffs.assign(levels, std::vector<std::vector<QuadraticFit>>(n, std::vector<QuadraticFit>(m)));
            model.gamma.assign(levels, std::vector<double>(n, 0.0));
            model.utilization.assign(levels, std::vector<double>(m, 0.0));
            seen.assign(levels, std::vector<std::vector<bool>>(n, std::vector<bool>(m, false)));
        } else if (kind == "SWEPT") {
            for (std::size_t k = 1; k < tok.size(); ++k)
                model.dominated_tiers.push_back(static_cast<int>(index(tok[k], model.tier_count, "tier")));
        } else if (kind == "PATTERN") {
            if (tok.size() != 3) fail("PATTERN needs 2 fields");
            const auto i = index(tok[1], model.pattern_count, "pattern");
            if (i != model.pattern_centroids.size()) fail("PATTERN lines must be in order");
            model.pattern_centroids.push_back(parse_double(tok[2], line_no));
        } else if (kind == "UTIL") {
            if (tok.size() != 4) fail("UTIL needs 3 fields");
            const auto l = level_of(tok[1]);
            model.utilization[l][index(tok[2], model.tier_count, "tier")] = parse_double(tok[3], line_no);
        } else if (kind == "COEF") {
            if (tok.size() != 8) fail("COEF needs 7 fields");
            const auto l = level_of(tok[1]);
            const auto i = index(tok[2], model.pattern_count, "pattern");
            const auto j = index(tok[3], model.tier_count, "tier");
            model.coeffs[l][i][j] = QuadraticFit{parse_double(tok[4], line_no), parse_double(tok[5], line_no),
                                                 parse_double(tok[6], line_no), parse_double(tok[7], line_no)};
            seen[l][i][j] = true;
        } else if (kind == "GAMMA") {
            if (tok.size() != 4) fail("GAMMA needs 3 fields");
            const auto l = level_of(tok[1]);
            model.gamma[l][index(tok[2], model.pattern_count, "pattern")] = parse_double(tok[3], line_no);
        } else {
            fail("unknown record '" + kind + "'");
        }
    }
    if (!header) throw ModelError("pre_model: missing header");
    if (!have_loads) throw ModelError("pre_model: missing LOADS");
    for (std::size_t l = 0; l < seen.size(); ++l)
        for (std::size_t i = 0; i < seen[l].size(); ++i)
            for (std::size_t j = 0; j < seen[l][i].size(); ++j)
                if (!seen[l][i][j]) throw ModelError("pre_model: missing COEF " + coords(l, static_cast<int>(i), static_cast<int>(j)));
    return model;
}

PerformanceModel parse_pre_model(const std::string& text) {
    std::istringstream in(text);
    return parse_pre_model(in);
}

}  // namespace tracedvfs
