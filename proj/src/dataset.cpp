#include "sarc/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "sarc/errors.hpp"
#include "sarc/rng.hpp"

namespace fs = std::filesystem;

namespace sarc {

bool on_half_grid(double s) {
    if (s < 1.0 || s > 5.0) return false;
    double steps = s * 2.0;
    return std::abs(steps - std::round(steps)) < 1e-9;
}

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split_csv_row(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) out.push_back(trim(field));
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

double parse_score(const std::string& s, int row, const char* col) {
    try {
        size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ParseError("manifest row " + std::to_string(row) + ": cannot parse " + col +
                         " value '" + s + "'");
    }
}

std::string resolve_path(const std::string& root, const std::string& p) {
    fs::path fp(p);
    if (fp.is_absolute()) return fp.string();
    return (fs::path(root) / fp).string();
}

}  // namespace

DatasetManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest: " + path);
    DatasetManifest m;
    m.root = fs::path(path).parent_path().string();
    if (m.root.empty()) m.root = ".";

    std::string line;
    if (!std::getline(in, line)) throw ParseError("manifest is empty (missing header): " + path);
    auto header = split_csv_row(line);
    if (header.size() != 3 || header[0] != "image_path" || header[1] != "expert1" ||
        header[2] != "expert2") {
        throw ParseError("manifest header must be 'image_path,expert1,expert2': " + path);
    }

    int row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        auto fields = split_csv_row(line);
        if (fields.size() != 3 || fields[0].empty()) {
            throw ParseError("manifest row " + std::to_string(row) + ": expected 3 fields");
        }
        ManifestRecord rec;
        rec.image_path = fields[0];
        rec.expert1 = parse_score(fields[1], row, "expert1");
        rec.expert2 = parse_score(fields[2], row, "expert2");
        if (!on_half_grid(rec.expert1) || !on_half_grid(rec.expert2)) {
            throw ValidationError("manifest row " + std::to_string(row) +
                                  ": score off the {1.0,1.5,...,5.0} grid");
        }
        std::string resolved = resolve_path(m.root, rec.image_path);
        if (!fs::exists(resolved)) {
            throw ValidationError("manifest row " + std::to_string(row) +
                                  ": image file missing: " + resolved);
        }
        m.records.push_back(std::move(rec));
    }
    return m;
}

FilterResult filter_and_label(const DatasetManifest& manifest) {
    FilterResult out;
    for (const auto& rec : manifest.records) {
        if (std::abs(rec.expert1 - rec.expert2) > 1.0 + 1e-12) {
            ++out.excluded;
            continue;
        }
        ScoredCell c;
        c.image_path = resolve_path(manifest.root, rec.image_path);
        c.id = fs::path(rec.image_path).stem().string();
        c.expert1 = rec.expert1;
        c.expert2 = rec.expert2;
        c.label = (rec.expert1 + rec.expert2) / 2.0;
        double q = c.label * 4.0;
        if (c.label < 1.0 || c.label > 5.0 || std::abs(q - std::round(q)) > 1e-9) {
            throw ValidationError("label off the quarter-step grid for " + c.id);
        }
        out.cells.push_back(std::move(c));
    }
    return out;
}

SplitResult split_dataset(const std::vector<ScoredCell>& cells, const SplitSpec& spec) {
    double sum = spec.train + spec.val + spec.test;
    if (std::abs(sum - 1.0) > 1e-6) {
        throw ConfigError("split fractions must sum to 1.0, got " + std::to_string(sum));
    }
    for (double f : {spec.train, spec.val, spec.test}) {
        if (f <= 0.0 || f >= 1.0) throw ConfigError("split fractions must lie in (0,1)");
    }

    // Group by exact label (quarter steps -> integer key).
    std::map<int, std::vector<int>> bins;
    for (size_t i = 0; i < cells.size(); ++i) {
        bins[(int)std::lround(cells[i].label * 4.0)].push_back((int)i);
    }

    Rng rng(spec.seed);
    SplitResult out;
    const double frac[3] = {spec.train, spec.val, spec.test};
    for (auto& [key, idx] : bins) {
        rng.shuffle(idx);
        int n = (int)idx.size();
        int take[3];
        double rem[3];
        int assigned = 0;
        for (int p = 0; p < 3; ++p) {
            double want = frac[p] * n;
            take[p] = (int)std::floor(want);
            rem[p] = want - take[p];
            assigned += take[p];
        }
        // Largest remainder gets the leftover items; ties resolve train->val->test.
        while (assigned < n) {
            int best = 0;
            for (int p = 1; p < 3; ++p) {
                if (rem[p] > rem[best] + 1e-12) best = p;
            }
            ++take[best];
            rem[best] = -1;
            ++assigned;
        }
        int at = 0;
        for (int p = 0; p < 3; ++p) {
            auto& dst = p == 0 ? out.train : p == 1 ? out.val : out.test;
            for (int k = 0; k < take[p]; ++k) dst.push_back(idx[at++]);
        }
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.val.begin(), out.val.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

std::map<double, int> label_histogram(const std::vector<ScoredCell>& cells) {
    std::map<double, int> h;
    for (int i = 0; i <= 8; ++i) h[1.0 + 0.5 * i] = 0;
    for (const auto& c : cells) h[c.label] += 1;
    return h;
}

void write_split_json(const std::string& path, const std::vector<ScoredCell>& cells,
                      const SplitResult& split, uint64_t seed) {
    nlohmann::json j;
    j["seed"] = seed;
    auto ids = [&](const std::vector<int>& part) {
        std::vector<std::string> out;
        for (int i : part) out.push_back(cells[(size_t)i].id);
        return out;
    };
    j["train"] = ids(split.train);
    j["val"] = ids(split.val);
    j["test"] = ids(split.test);
    std::ofstream out(path);
    if (!out) throw IoError("cannot write split file: " + path);
    out << j.dump(2) << "\n";
}

SplitResult read_split_json(const std::string& path, const std::vector<ScoredCell>& cells) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open split file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ParseError("split file is not valid JSON: " + std::string(e.what()));
    }
    std::map<std::string, int> by_id;
    for (size_t i = 0; i < cells.size(); ++i) by_id[cells[i].id] = (int)i;
    auto collect = [&](const char* key) {
        std::vector<int> out;
        if (!j.contains(key)) throw ParseError(std::string("split file missing '") + key + "'");
        for (const auto& id : j[key]) {
            auto it = by_id.find(id.get<std::string>());
            if (it == by_id.end()) {
                throw ValidationError("split file references unknown cell id '" +
                                      id.get<std::string>() + "'");
            }
            out.push_back(it->second);
        }
        return out;
    };
    SplitResult r;
    r.train = collect("train");
    r.val = collect("val");
    r.test = collect("test");
    return r;
}

}  // namespace sarc
