#include "carbonsched/provenance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <Eigen/Dense>

namespace carbonsched {

const std::vector<std::string> &canonical_features()
{
    static const std::vector<std::string> names{feature::kCpuCycles, feature::kAcceleratorCycles,
                                                feature::kNetworkBytes, feature::kStorageBytesMoved,
                                                feature::kByteSecondsResident};
    return names;
}

Joules estimate_energy(const AttributionModel &model, const TelemetrySample &sample)
{
    Joules e = model.baseline;
    for (const auto &[name, value] : sample.features) {
        auto it = model.coefficients.find(name);
        if (it == model.coefficients.end()) throw std::domain_error("model has no coefficient for feature '" + name + "'");
        e += it->second * value;
    }
    return e;
}

namespace {

std::string describe_collinear(const std::vector<std::string> &names)
{
    std::string out = "design matrix is rank deficient; collinear columns:";
    for (const auto &n : names) out += " " + n;
    return out;
}

constexpr double kRankThreshold = 1e-10;

} // namespace

RankDeficientError::RankDeficientError(std::vector<std::string> collinear)
    : std::runtime_error(describe_collinear(collinear)), collinear_(std::move(collinear))
{
}

AttributionModel fit_model(const std::vector<LabeledSample> &samples)
{
    std::set<std::string> feature_set;
    for (const auto &s : samples)
        for (const auto &[name, _] : s.sample.features) feature_set.insert(name);
    const std::vector<std::string> features(feature_set.begin(), feature_set.end());
    const auto p = static_cast<Eigen::Index>(features.size()) + 1; // + intercept
    const auto n = static_cast<Eigen::Index>(samples.size());
    if (n < p)
        throw InputError("insufficient samples: " + std::to_string(n) + " given, at least " + std::to_string(p) +
                         " needed for " + std::to_string(p - 1) + " features plus baseline");

    std::vector<std::string> column_names{"baseline"};
    column_names.insert(column_names.end(), features.begin(), features.end());

    Eigen::MatrixXd x(n, p);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto &s = samples[static_cast<std::size_t>(i)];
        x(i, 0) = 1.0;
        for (Eigen::Index j = 1; j < p; ++j) {
            auto it = s.sample.features.find(features[static_cast<std::size_t>(j - 1)]);
            x(i, j) = it == s.sample.features.end() ? 0.0 : it->second;
        }
        y(i) = s.measured;
    }

    // Equilibrate columns so features spanning many decades get a fair rank test.
    Eigen::VectorXd scale(p);
    for (Eigen::Index j = 0; j < p; ++j) {
        const double norm = x.col(j).norm();
        scale(j) = norm > 0.0 ? norm : 1.0;
        x.col(j) /= scale(j);
    }

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    qr.setThreshold(kRankThreshold);
    if (qr.rank() < p) {
        Eigen::FullPivLU<Eigen::MatrixXd> lu(x);
        lu.setThreshold(kRankThreshold);
        const Eigen::MatrixXd kernel = lu.kernel();
        std::vector<std::string> collinear;
        for (Eigen::Index j = 0; j < p; ++j)
            if (kernel.row(j).cwiseAbs().maxCoeff() > 1e-8) collinear.push_back(column_names[static_cast<std::size_t>(j)]);
        throw RankDeficientError(std::move(collinear));
    }

    // Fit, clamp negatives to zero, refit the survivors until none is negative.
    std::vector<Eigen::Index> active(static_cast<std::size_t>(p));
    std::iota(active.begin(), active.end(), Eigen::Index{0});
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    while (!active.empty()) {
        Eigen::MatrixXd sub(n, static_cast<Eigen::Index>(active.size()));
        for (std::size_t k = 0; k < active.size(); ++k) sub.col(static_cast<Eigen::Index>(k)) = x.col(active[k]);
        const Eigen::VectorXd sol = sub.colPivHouseholderQr().solve(y);
        std::vector<Eigen::Index> keep;
        beta.setZero();
        for (std::size_t k = 0; k < active.size(); ++k) {
            const double v = sol(static_cast<Eigen::Index>(k));
            if (v < 0.0) continue;
            keep.push_back(active[k]);
            beta(active[k]) = v;
        }
        if (keep.size() == active.size()) break;
        active = std::move(keep);
    }

    AttributionModel model;
    model.baseline = beta(0) / scale(0);
    for (Eigen::Index j = 1; j < p; ++j)
        model.coefficients[features[static_cast<std::size_t>(j - 1)]] = beta(j) / scale(j);
    return model;
}

FitStatistics fit_statistics(const AttributionModel &model, const std::vector<LabeledSample> &samples)
{
    FitStatistics st;
    st.samples = samples.size();
    if (samples.empty()) return st;
    double mean = 0.0;
    for (const auto &s : samples) mean += s.measured;
    mean /= static_cast<double>(samples.size());
    double ss_res = 0.0, ss_tot = 0.0;
    for (const auto &s : samples) {
        const double r = s.measured - estimate_energy(model, s.sample);
        ss_res += r * r;
        ss_tot += (s.measured - mean) * (s.measured - mean);
        st.max_abs_residual = std::max(st.max_abs_residual, std::abs(r));
    }
    st.rmse = std::sqrt(ss_res / static_cast<double>(samples.size()));
    st.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
    return st;
}

std::string to_string(IdlePolicy policy)
{
    switch (policy) {
    case IdlePolicy::Proportional: return "proportional";
    case IdlePolicy::Equal: return "equal";
    case IdlePolicy::OperatorOnly: return "operator-only";
    }
    return "proportional";
}

IdlePolicy parse_idle_policy(std::string_view name)
{
    if (name == "proportional") return IdlePolicy::Proportional;
    if (name == "equal") return IdlePolicy::Equal;
    if (name == "operator-only") return IdlePolicy::OperatorOnly;
    throw InputError("unknown idle attribution mode '" + std::string(name) +
                     "' (expected proportional, equal, operator-only)");
}

IntervalLedger attribute_interval(const AttributionModel &model, const std::vector<TelemetrySample> &samples,
                                  Joules measured_total, IdlePolicy policy)
{
    if (!(measured_total >= 0.0)) throw std::domain_error("measured interval energy must be >= 0");
    IntervalLedger ledger;
    if (samples.empty()) {
        ledger.operator_residual = measured_total;
        return ledger;
    }
    Joules estimated = 0.0;
    for (const auto &s : samples) {
        const Joules e = std::max(0.0, estimate_energy(model, s));
        ledger.shares[s.function_id].direct += e;
        estimated += e;
    }
    const Joules residual = measured_total - estimated;
    const auto count = static_cast<double>(ledger.shares.size());

    if (residual < 0.0) {
        const double factor = measured_total / estimated;
        for (auto &[_, share] : ledger.shares) share.direct *= factor;
        return ledger;
    }
    switch (policy) {
    case IdlePolicy::OperatorOnly: ledger.operator_residual = residual; break;
    case IdlePolicy::Equal:
        for (auto &[_, share] : ledger.shares) share.idle_share = residual / count;
        break;
    case IdlePolicy::Proportional:
        if (estimated > 0.0) {
            for (auto &[_, share] : ledger.shares) share.idle_share = residual * (share.direct / estimated);
        } else {
            for (auto &[_, share] : ledger.shares) share.idle_share = residual / count;
        }
        break;
    }
    return ledger;
}

std::map<std::string, ProvenanceRecord> aggregate_provenance(std::map<std::string, ProvenanceRecord> records,
                                                             const std::map<std::string, std::string> &parent_of)
{
    std::map<std::string, std::vector<std::string>> children;
    for (const auto &[child, parent] : parent_of) {
        if (!records.count(child)) throw InputError("call graph names unknown function '" + child + "'");
        if (!records.count(parent)) throw InputError("call graph names unknown caller '" + parent + "'");
        children[parent].push_back(child);
    }
    for (auto &[id, rec] : records) {
        rec.function_id = id;
        rec.descendant_energy = 0.0;
    }

    // Post-order from every root; anything left unvisited sits on a cycle.
    std::set<std::string> done;
    for (const auto &[id, _] : records) {
        if (parent_of.count(id)) continue;
        std::vector<std::pair<std::string, std::size_t>> stack{{id, 0}};
        while (!stack.empty()) {
            auto &[node, next] = stack.back();
            auto it = children.find(node);
            if (it != children.end() && next < it->second.size()) {
                stack.emplace_back(it->second[next++], 0);
                continue;
            }
            Joules sum = 0.0;
            if (it != children.end())
                for (const auto &c : it->second) sum += records.at(c).total_energy();
            records.at(node).descendant_energy = sum;
            done.insert(node);
            stack.pop_back();
        }
    }
    if (done.size() != records.size()) {
        for (const auto &[id, _] : records) {
            if (done.count(id)) continue;
            std::vector<std::string> walk{id};
            std::string cur = parent_of.at(id);
            while (std::find(walk.begin(), walk.end(), cur) == walk.end()) {
                walk.push_back(cur);
                cur = parent_of.at(cur);
            }
            std::vector<std::string> cycle(std::find(walk.begin(), walk.end(), cur), walk.end());
            std::reverse(cycle.begin(), cycle.end());
            throw CycleError(std::move(cycle));
        }
    }
    return records;
}

Grams carbonize(Joules energy, const CarbonIntensitySeries &series, Micros t)
{
    return energy / kJoulesPerKwh * intensity_at(series, t);
}

} // namespace carbonsched
