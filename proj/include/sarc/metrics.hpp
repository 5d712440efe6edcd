#pragma once

#include <string>
#include <vector>

#include "sarc/tensor.hpp"

namespace sarc {

// Average ranks (ties share the mean of their rank range), e.g.
// [10, 20, 20, 30] -> [1, 2.5, 2.5, 4].
std::vector<double> average_ranks(const std::vector<double>& x);

// Tie-aware Spearman correlation: Pearson correlation of average ranks. On
// tie-free data this equals the 1 - 6*sum(d^2)/(N(N^2-1)) shortcut. Either
// argument constant -> the correlation is undefined (validation error).
double spearman(const std::vector<double>& pred, const std::vector<double>& target);

double mae(const std::vector<double>& pred, const std::vector<double>& target);
double mse(const std::vector<double>& pred, const std::vector<double>& target);

// 1 - SS_res/SS_tot. A constant target makes SS_tot zero (validation error).
double r2(const std::vector<double>& pred, const std::vector<double>& target);

struct SampleResult {
    std::string id;
    double label = 0;
    double prediction = 0;  // clamped score
};

struct EvalReport {
    double spearman = 0;
    double mae = 0;
    double mse = 0;
    double r2 = 0;
    int n = 0;
    std::vector<SampleResult> samples;
};

// All four metrics over already-clamped predictions carried in `samples`.
EvalReport evaluate_samples(std::vector<SampleResult> samples);

void write_eval_report(const std::string& path, const EvalReport& r);
EvalReport read_eval_report(const std::string& path);

}  // namespace sarc
