#include "sarc/image.hpp"

#include <cmath>
#include <filesystem>
#include <iostream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "sarc/errors.hpp"

namespace sarc {

namespace {

Tensor<float> mat_to_tensor(const cv::Mat& m) {
    cv::Mat f;
    m.convertTo(f, CV_32F);
    Tensor<float> t({f.rows, f.cols});
    for (int y = 0; y < f.rows; ++y) {
        const float* row = f.ptr<float>(y);
        std::copy(row, row + f.cols, t.data() + (int64_t)y * f.cols);
    }
    return t;
}

cv::Mat tensor_to_mat(const Tensor<float>& t) {
    cv::Mat m(t.dim(0), t.dim(1), CV_32F);
    for (int y = 0; y < m.rows; ++y) {
        std::copy(t.data() + (int64_t)y * t.dim(1), t.data() + (int64_t)(y + 1) * t.dim(1),
                  m.ptr<float>(y));
    }
    return m;
}

}  // namespace

void validate_cell_image(const CellImage& img) {
    if (img.pixels.ndim() != 2 || img.height() < 1 || img.width() < 1) {
        throw ValidationError("image '" + img.id + "' has invalid dimensions " +
                              shape_str(img.pixels.shape));
    }
    for (float v : img.pixels.v) {
        if (!std::isfinite(v) || v < 0.0f) {
            throw ValidationError("image '" + img.id + "' has a non-finite or negative intensity");
        }
    }
}

CellImage load_cell_image(const std::string& path) {
    cv::Mat m = cv::imread(path, cv::IMREAD_UNCHANGED);
    if (m.empty()) throw IoError("cannot read image: " + path);
    if (m.channels() > 1) {
        std::cerr << "warning: " << path << " has " << m.channels()
                  << " channels; using channel 0\n";
        std::vector<cv::Mat> ch;
        cv::split(m, ch);
        m = ch[0];
    }
    CellImage img;
    img.id = std::filesystem::path(path).stem().string();
    img.pixels = mat_to_tensor(m);
    validate_cell_image(img);
    return img;
}

void save_image_png8(const std::string& path, const Tensor<float>& img) {
    cv::Mat m = tensor_to_mat(img), u8;
    cv::min(m, 255.0, m);
    cv::max(m, 0.0, m);
    m.convertTo(u8, CV_8U);
    if (!cv::imwrite(path, u8)) throw IoError("cannot write image: " + path);
}

void save_image_png16(const std::string& path, const Tensor<float>& img) {
    cv::Mat m = tensor_to_mat(img), u16;
    cv::min(m, 65535.0, m);
    cv::max(m, 0.0, m);
    m.convertTo(u16, CV_16U);
    if (!cv::imwrite(path, u16)) throw IoError("cannot write image: " + path);
}

void save_image_tiff32(const std::string& path, const Tensor<float>& img) {
    if (img.ndim() != 2) throw ShapeError("image must be {H,W}, got " + shape_str(img.shape));
    // Compression 1 = none; the default deflate path is not bit-exact for
    // float data in this OpenCV build.
    if (!cv::imwrite(path, tensor_to_mat(img), {cv::IMWRITE_TIFF_COMPRESSION, 1})) {
        throw IoError("cannot write image: " + path);
    }
}

void write_stack_tiff(const std::string& path, const Tensor<float>& chw) {
    if (chw.ndim() != 3 || chw.dim(0) != 3) {
        throw ShapeError("stack must be {3,H,W}, got " + shape_str(chw.shape));
    }
    int H = chw.dim(1), W = chw.dim(2);
    std::vector<cv::Mat> ch;
    for (int c = 0; c < 3; ++c) {
        cv::Mat m(H, W, CV_32F);
        const float* src = chw.data() + (int64_t)c * H * W;
        for (int y = 0; y < H; ++y) std::copy(src + (int64_t)y * W, src + (int64_t)(y + 1) * W, m.ptr<float>(y));
        ch.push_back(m);
    }
    cv::Mat merged;
    cv::merge(ch, merged);
    // Compression 1 = none; the default deflate path is not bit-exact for
    // float data in this OpenCV build.
    if (!cv::imwrite(path, merged, {cv::IMWRITE_TIFF_COMPRESSION, 1})) {
        throw IoError("cannot write stack: " + path);
    }
}

Tensor<float> read_stack_tiff(const std::string& path) {
    cv::Mat m = cv::imread(path, cv::IMREAD_UNCHANGED);
    if (m.empty()) throw IoError("cannot read stack: " + path);
    if (m.channels() != 3 || m.depth() != CV_32F) {
        throw ParseError("stack file is not 3-channel float32: " + path);
    }
    std::vector<cv::Mat> ch;
    cv::split(m, ch);
    Tensor<float> t({3, m.rows, m.cols});
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < m.rows; ++y) {
            const float* row = ch[c].ptr<float>(y);
            std::copy(row, row + m.cols, t.data() + ((int64_t)c * m.rows + y) * m.cols);
        }
    }
    return t;
}

void write_class_png(const std::string& path, const Tensor<uint8_t>& map) {
    cv::Mat m(map.dim(0), map.dim(1), CV_8U);
    for (int y = 0; y < m.rows; ++y) {
        std::copy(map.data() + (int64_t)y * map.dim(1), map.data() + (int64_t)(y + 1) * map.dim(1),
                  m.ptr<uint8_t>(y));
    }
    if (!cv::imwrite(path, m)) throw IoError("cannot write class map: " + path);
}

Tensor<uint8_t> read_class_png(const std::string& path) {
    cv::Mat m = cv::imread(path, cv::IMREAD_UNCHANGED);
    if (m.empty()) throw IoError("cannot read class map: " + path);
    if (m.channels() != 1 || m.depth() != CV_8U) {
        throw ParseError("class map is not 8-bit single-channel: " + path);
    }
    Tensor<uint8_t> t({m.rows, m.cols});
    for (int y = 0; y < m.rows; ++y) {
        const uint8_t* row = m.ptr<uint8_t>(y);
        std::copy(row, row + m.cols, t.data() + (int64_t)y * m.cols);
    }
    return t;
}

Tensor<float> minmax01(const Tensor<float>& img) {
    float lo = img.v.empty() ? 0.0f : img.v[0], hi = lo;
    for (float v : img.v) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    Tensor<float> out;
    out.shape = img.shape;
    out.v.resize(img.v.size());
    float range = hi - lo;
    if (range <= 0.0f) {
        std::fill(out.v.begin(), out.v.end(), 0.0f);
        return out;
    }
    for (size_t i = 0; i < img.v.size(); ++i) out.v[i] = (img.v[i] - lo) / range;
    return out;
}

}  // namespace sarc
