#include "sarc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "sarc/errors.hpp"

namespace sarc {

namespace {

void check_pair(const std::vector<double>& pred, const std::vector<double>& target,
                size_t min_len) {
    if (pred.size() != target.size())
        throw ShapeError("metric inputs differ in length: " + std::to_string(pred.size()) +
                         " vs " + std::to_string(target.size()));
    if (pred.size() < min_len)
        throw ValidationError("metric needs at least " + std::to_string(min_len) + " samples");
    for (double x : pred)
        if (!std::isfinite(x)) throw ValidationError("prediction vector has a non-finite value");
    for (double x : target)
        if (!std::isfinite(x)) throw ValidationError("target vector has a non-finite value");
}

bool is_constant(const std::vector<double>& x) {
    for (double v : x)
        if (v != x[0]) return false;
    return true;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const size_t n = a.size();
    double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double num = 0, da = 0, db = 0;
    for (size_t i = 0; i < n; ++i) {
        num += (a[i] - ma) * (b[i] - mb);
        da += (a[i] - ma) * (a[i] - ma);
        db += (b[i] - mb) * (b[i] - mb);
    }
    return num / std::sqrt(da * db);
}

}  // namespace

std::vector<double> average_ranks(const std::vector<double>& x) {
    const size_t n = x.size();
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return x[a] < x[b]; });
    std::vector<double> ranks(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && x[idx[j + 1]] == x[idx[i]]) ++j;
        const double shared = 0.5 * ((i + 1) + (j + 1));  // mean of 1-based rank range
        for (size_t k = i; k <= j; ++k) ranks[idx[k]] = shared;
        i = j + 1;
    }
    return ranks;
}

double spearman(const std::vector<double>& pred, const std::vector<double>& target) {
    check_pair(pred, target, 2);
    if (is_constant(pred))
        throw ValidationError("rank correlation is undefined for a constant prediction vector");
    if (is_constant(target))
        throw ValidationError("rank correlation is undefined for a constant target vector");
    return pearson(average_ranks(pred), average_ranks(target));
}

double mae(const std::vector<double>& pred, const std::vector<double>& target) {
    check_pair(pred, target, 1);
    double s = 0;
    for (size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - target[i]);
    return s / pred.size();
}

double mse(const std::vector<double>& pred, const std::vector<double>& target) {
    check_pair(pred, target, 1);
    double s = 0;
    for (size_t i = 0; i < pred.size(); ++i)
        s += (pred[i] - target[i]) * (pred[i] - target[i]);
    return s / pred.size();
}

double r2(const std::vector<double>& pred, const std::vector<double>& target) {
    check_pair(pred, target, 2);
    if (is_constant(target))
        throw ValidationError("r2 is undefined for a constant target vector");
    const double mean = std::accumulate(target.begin(), target.end(), 0.0) / target.size();
    double ss_res = 0, ss_tot = 0;
    for (size_t i = 0; i < target.size(); ++i) {
        ss_res += (target[i] - pred[i]) * (target[i] - pred[i]);
        ss_tot += (target[i] - mean) * (target[i] - mean);
    }
    return 1.0 - ss_res / ss_tot;
}

EvalReport evaluate_samples(std::vector<SampleResult> samples) {
    if (samples.empty()) throw ValidationError("evaluation needs at least one sample");
    EvalReport r;
    r.samples = std::move(samples);
    r.n = (int)r.samples.size();
    std::vector<double> pred, target;
    pred.reserve(r.n);
    target.reserve(r.n);
    for (const auto& s : r.samples) {
        pred.push_back(s.prediction);
        target.push_back(s.label);
    }
    r.spearman = spearman(pred, target);
    r.mae = mae(pred, target);
    r.mse = mse(pred, target);
    r.r2 = r2(pred, target);
    return r;
}

void write_eval_report(const std::string& path, const EvalReport& r) {
    nlohmann::json j;
    j["spearman"] = r.spearman;
    j["mae"] = r.mae;
    j["mse"] = r.mse;
    j["r2"] = r.r2;
    j["n"] = r.n;
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& s : r.samples)
        arr.push_back({{"id", s.id}, {"label", s.label}, {"prediction", s.prediction}});
    j["samples"] = arr;
    std::ofstream out(path);
    if (!out) throw IoError("cannot write report '" + path + "'");
    out << j.dump(2) << "\n";
}

EvalReport read_eval_report(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read report '" + path + "'");
    EvalReport r;
    try {
        nlohmann::json j;
        in >> j;
        r.spearman = j.at("spearman").get<double>();
        r.mae = j.at("mae").get<double>();
        r.mse = j.at("mse").get<double>();
        r.r2 = j.at("r2").get<double>();
        r.n = j.at("n").get<int>();
        for (const auto& e : j.at("samples")) {
            SampleResult s;
            s.id = e.at("id").get<std::string>();
            s.label = e.at("label").get<double>();
            s.prediction = e.at("prediction").get<double>();
            r.samples.push_back(s);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("report '" + path + "': " + e.what());
    }
    return r;
}

}  // namespace sarc
