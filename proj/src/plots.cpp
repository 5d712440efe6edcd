#include "sarc/plots.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "sarc/errors.hpp"

namespace sarc {

namespace {

constexpr int kW = 720, kH = 540;
constexpr int kMargin = 70;
const cv::Scalar kInk(40, 40, 40);
const cv::Scalar kAccent(180, 90, 30);   // BGR: blue-ish
const cv::Scalar kAccent2(60, 140, 60);  // green
const cv::Scalar kGrid(220, 220, 220);

struct Axes {
    double x0, x1, y0, y1;

    cv::Point map(double x, double y) const {
        const double px = kMargin + (x - x0) / (x1 - x0) * (kW - 2 * kMargin);
        const double py = kH - kMargin - (y - y0) / (y1 - y0) * (kH - 2 * kMargin);
        return {(int)std::lround(px), (int)std::lround(py)};
    }
};

cv::Mat canvas() { return cv::Mat(kH, kW, CV_8UC3, cv::Scalar(255, 255, 255)); }

void draw_frame(cv::Mat& img, const Axes& ax, const std::string& title,
                const std::string& xlabel, const std::string& ylabel, int xticks = 5,
                int yticks = 5) {
    for (int i = 0; i <= xticks; ++i) {
        const double x = ax.x0 + (ax.x1 - ax.x0) * i / xticks;
        cv::line(img, ax.map(x, ax.y0), ax.map(x, ax.y1), kGrid, 1);
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.2g", x);
        cv::putText(img, buf, ax.map(x, ax.y0) + cv::Point(-12, 20),
                    cv::FONT_HERSHEY_SIMPLEX, 0.4, kInk, 1, cv::LINE_AA);
    }
    for (int i = 0; i <= yticks; ++i) {
        const double y = ax.y0 + (ax.y1 - ax.y0) * i / yticks;
        cv::line(img, ax.map(ax.x0, y), ax.map(ax.x1, y), kGrid, 1);
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.3g", y);
        cv::putText(img, buf, ax.map(ax.x0, y) + cv::Point(-55, 4),
                    cv::FONT_HERSHEY_SIMPLEX, 0.4, kInk, 1, cv::LINE_AA);
    }
    cv::rectangle(img, ax.map(ax.x0, ax.y1), ax.map(ax.x1, ax.y0), kInk, 1);
    cv::putText(img, title, {kMargin, 32}, cv::FONT_HERSHEY_SIMPLEX, 0.6, kInk, 1,
                cv::LINE_AA);
    cv::putText(img, xlabel, {kW / 2 - 40, kH - 18}, cv::FONT_HERSHEY_SIMPLEX, 0.45, kInk, 1,
                cv::LINE_AA);
    cv::putText(img, ylabel, {12, kMargin - 12}, cv::FONT_HERSHEY_SIMPLEX, 0.45, kInk, 1,
                cv::LINE_AA);
}

void save(const std::string& path, const cv::Mat& img) {
    if (!cv::imwrite(path, img)) throw IoError("cannot write plot '" + path + "'");
}

}  // namespace

void plot_scatter(const std::string& path, const EvalReport& report) {
    if (report.samples.empty()) throw ValidationError("scatter plot needs samples");
    cv::Mat img = canvas();
    Axes ax{0.8, 5.2, 0.8, 5.2};
    char title[128];
    std::snprintf(title, sizeof title, "prediction vs label  (n=%d, rs=%.3f, mae=%.3f)",
                  report.n, report.spearman, report.mae);
    draw_frame(img, ax, title, "expert label", "predicted score");
    cv::line(img, ax.map(1, 1), ax.map(5, 5), kGrid, 2);
    for (const auto& s : report.samples)
        cv::circle(img, ax.map(s.label, s.prediction), 3, kAccent, cv::FILLED, cv::LINE_AA);
    save(path, img);
}

void plot_label_histogram(const std::string& path, const std::vector<double>& labels) {
    if (labels.empty()) throw ValidationError("histogram needs labels");
    std::map<double, int> bins;
    for (double b = 1.0; b <= 5.0; b += 0.5) bins[b] = 0;
    for (double l : labels) bins[l]++;
    int peak = 1;
    for (auto& [b, c] : bins) peak = std::max(peak, c);

    cv::Mat img = canvas();
    Axes ax{0.75, 5.25, 0.0, peak * 1.15};
    draw_frame(img, ax, "label distribution", "label", "count", 9);
    for (auto& [b, c] : bins) {
        if (c == 0) continue;
        cv::rectangle(img, ax.map(b - 0.2, c), ax.map(b + 0.2, 0), kAccent, cv::FILLED);
    }
    save(path, img);
}

void plot_training_curves(const std::string& path, const TrainHistory& h) {
    if (h.train_loss.empty()) throw ValidationError("training-curve plot needs epochs");
    const int n = (int)h.train_loss.size();
    double hi = 0;
    for (double v : h.train_loss) hi = std::max(hi, v);
    for (double v : h.val_metric) hi = std::max(hi, v);

    cv::Mat img = canvas();
    Axes ax{0, (double)std::max(1, n - 1), 0, hi * 1.1 + 1e-12};
    draw_frame(img, ax, "training curves", "epoch", "loss / metric");
    auto polyline = [&](const std::vector<double>& ys, const cv::Scalar& color) {
        for (int i = 1; i < (int)ys.size(); ++i)
            cv::line(img, ax.map(i - 1, ys[i - 1]), ax.map(i, ys[i]), color, 2, cv::LINE_AA);
        for (int i = 0; i < (int)ys.size(); ++i)
            cv::circle(img, ax.map(i, ys[i]), 2, color, cv::FILLED, cv::LINE_AA);
    };
    polyline(h.train_loss, kAccent);
    polyline(h.val_metric, kAccent2);
    if (h.selected_epoch >= 0 && h.selected_epoch < n) {
        cv::Point p = ax.map(h.selected_epoch, h.val_metric[h.selected_epoch]);
        cv::circle(img, p, 7, kInk, 1, cv::LINE_AA);
    }
    cv::putText(img, "train loss", {kW - 220, 32}, cv::FONT_HERSHEY_SIMPLEX, 0.45, kAccent, 1,
                cv::LINE_AA);
    cv::putText(img, h.val_metric_name, {kW - 220, 52}, cv::FONT_HERSHEY_SIMPLEX, 0.45,
                kAccent2, 1, cv::LINE_AA);
    save(path, img);
}

}  // namespace sarc
