#include "advlab/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

#include "advlab/rng.hpp"

namespace advlab {

namespace {

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

std::uint32_t read_u32_be(std::ifstream& f, const char* what) {
    unsigned char b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    if (!f) throw std::runtime_error(std::string("idx: truncated ") + what);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

void write_u32_be(std::ofstream& f, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    f.write(reinterpret_cast<char*>(b), 4);
}

double quantize_px(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

}  // namespace

Tensor Dataset::image(std::size_t i) const {
    if (i >= size()) throw std::invalid_argument("dataset: image index out of range");
    std::size_t m = pixels_per_image();
    Tensor out(Shape{1, images.dim(1), images.dim(2), images.dim(3)});
    std::memcpy(out.data(), images.data() + i * m, m * sizeof(double));
    return out;
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
    Dataset out;
    out.images = Tensor(Shape{indices.size(), images.dim(1), images.dim(2), images.dim(3)});
    out.labels.resize(indices.size());
    out.num_classes = num_classes;
    out.split_tag = split_tag;
    out.provenance = provenance;
    std::size_t m = pixels_per_image();
    for (std::size_t j = 0; j < indices.size(); ++j) {
        std::size_t i = indices[j];
        if (i >= size()) throw std::invalid_argument("dataset: subset index out of range");
        std::memcpy(out.images.data() + j * m, images.data() + i * m, m * sizeof(double));
        out.labels[j] = labels[i];
    }
    return out;
}

void Dataset::validate() const {
    if (images.rank() != 4) throw std::runtime_error("dataset: images must be [N,C,H,W]");
    if (images.dim(0) != labels.size()) throw std::runtime_error("dataset: image/label count mismatch");
    if (num_classes < 1) throw std::runtime_error("dataset: num_classes must be positive");
    for (double v : images.values()) {
        if (!(v >= 0.0 && v <= 1.0)) throw std::runtime_error("dataset: pixel outside [0,1]");
    }
    for (int y : labels) {
        if (y < 0 || y >= num_classes) throw std::runtime_error("dataset: label outside [0, classes)");
    }
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream fi(images_path, std::ios::binary);
    if (!fi) throw std::runtime_error("idx: cannot open " + images_path);
    if (read_u32_be(fi, "image magic") != kImagesMagic) {
        throw std::runtime_error("idx: bad image magic in " + images_path);
    }
    std::size_t n = read_u32_be(fi, "image count");
    std::size_t h = read_u32_be(fi, "rows");
    std::size_t w = read_u32_be(fi, "cols");
    std::vector<unsigned char> raw(n * h * w);
    fi.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!fi) throw std::runtime_error("idx: truncated pixel payload in " + images_path);

    std::ifstream fl(labels_path, std::ios::binary);
    if (!fl) throw std::runtime_error("idx: cannot open " + labels_path);
    if (read_u32_be(fl, "label magic") != kLabelsMagic) {
        throw std::runtime_error("idx: bad label magic in " + labels_path);
    }
    std::size_t nl = read_u32_be(fl, "label count");
    if (nl != n) throw std::runtime_error("idx: image/label count mismatch");
    std::vector<unsigned char> lab(nl);
    fl.read(reinterpret_cast<char*>(lab.data()), static_cast<std::streamsize>(lab.size()));
    if (!fl) throw std::runtime_error("idx: truncated label payload in " + labels_path);

    Dataset ds;
    ds.images = Tensor(Shape{n, 1, h, w});
    for (std::size_t i = 0; i < raw.size(); ++i) ds.images[i] = raw[i] / 255.0;
    ds.labels.assign(lab.begin(), lab.end());
    int max_label = 0;
    for (int y : ds.labels) max_label = std::max(max_label, y);
    ds.num_classes = max_label + 1;
    ds.provenance = "idx:" + images_path;
    ds.validate();
    return ds;
}

void save_idx(const Dataset& ds, const std::string& images_path, const std::string& labels_path) {
    if (ds.images.dim(1) != 1) throw std::invalid_argument("idx: only single-channel images supported");
    std::ofstream fi(images_path, std::ios::binary | std::ios::trunc);
    if (!fi) throw std::runtime_error("idx: cannot open " + images_path + " for writing");
    write_u32_be(fi, kImagesMagic);
    write_u32_be(fi, static_cast<std::uint32_t>(ds.size()));
    write_u32_be(fi, static_cast<std::uint32_t>(ds.images.dim(2)));
    write_u32_be(fi, static_cast<std::uint32_t>(ds.images.dim(3)));
    std::vector<unsigned char> raw(ds.images.numel());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        raw[i] = static_cast<unsigned char>(std::lround(std::clamp(ds.images[i], 0.0, 1.0) * 255.0));
    }
    fi.write(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!fi) throw std::runtime_error("idx: write failed for " + images_path);

    std::ofstream fl(labels_path, std::ios::binary | std::ios::trunc);
    if (!fl) throw std::runtime_error("idx: cannot open " + labels_path + " for writing");
    write_u32_be(fl, kLabelsMagic);
    write_u32_be(fl, static_cast<std::uint32_t>(ds.size()));
    for (int y : ds.labels) {
        auto b = static_cast<unsigned char>(y);
        fl.write(reinterpret_cast<char*>(&b), 1);
    }
    if (!fl) throw std::runtime_error("idx: write failed for " + labels_path);
}

Dataset make_blobs(std::size_t n_per_class, int classes, std::size_t dim, double separation, std::uint64_t seed) {
    if (!(separation > 0)) throw std::invalid_argument("make_blobs: separation must be positive");
    if (classes < 2 || n_per_class == 0 || dim == 0) throw std::invalid_argument("make_blobs: degenerate request");
    auto rng = substream(seed, "blobs.centers");
    double side = separation * static_cast<double>(classes) * 2.0;
    std::uniform_real_distribution<double> unif(0.0, side);
    std::vector<std::vector<double>> centers;
    while (centers.size() < static_cast<std::size_t>(classes)) {
        std::vector<double> c(dim);
        for (double& v : c) v = unif(rng);
        bool ok = true;
        for (const auto& other : centers) {
            double d2 = 0;
            for (std::size_t j = 0; j < dim; ++j) d2 += (c[j] - other[j]) * (c[j] - other[j]);
            if (d2 < separation * separation) {
                ok = false;
                break;
            }
        }
        if (ok) centers.push_back(std::move(c));
    }

    std::size_t n = n_per_class * static_cast<std::size_t>(classes);
    std::vector<double> pts(n * dim);
    std::vector<int> labels(n);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::size_t row = 0;
    for (int c = 0; c < classes; ++c) {
        auto srng = substream(seed, "blobs.samples", static_cast<std::uint64_t>(c));
        for (std::size_t i = 0; i < n_per_class; ++i, ++row) {
            for (std::size_t j = 0; j < dim; ++j) pts[row * dim + j] = centers[c][j] + gauss(srng);
            labels[row] = c;
        }
    }
    double lo = pts[0], hi = pts[0];
    for (double v : pts) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    double scale = hi > lo ? 1.0 / (hi - lo) : 1.0;
    for (double& v : pts) v = (v - lo) * scale;

    Dataset ds;
    ds.images = Tensor(Shape{n, 1, 1, dim}, std::move(pts));
    ds.labels = std::move(labels);
    ds.num_classes = classes;
    ds.provenance = "blobs:seed=" + std::to_string(seed);
    ds.validate();
    return ds;
}

Dataset make_desk_corpus(std::size_t n_per_class, int classes, std::uint64_t seed) {
    if (classes < 2 || n_per_class == 0) throw std::invalid_argument("make_desk_corpus: degenerate request");
    const std::size_t side = 28;
    const std::size_t m = side * side;

    // Per-class template: box-smoothed random field thresholded at its upper
    // quartile, giving a blob-like binary glyph per class.
    std::vector<std::vector<double>> templates(static_cast<std::size_t>(classes));
    for (int c = 0; c < classes; ++c) {
        auto rng = substream(seed, "desk.template", static_cast<std::uint64_t>(c));
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        std::vector<double> field(m);
        for (double& v : field) v = unif(rng);
        std::vector<double> tmp(m);
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t i = 0; i < side; ++i) {
                for (std::size_t j = 0; j < side; ++j) {
                    double sum = 0;
                    int cnt = 0;
                    for (int di = -1; di <= 1; ++di) {
                        for (int dj = -1; dj <= 1; ++dj) {
                            long ii = static_cast<long>(i) + di, jj = static_cast<long>(j) + dj;
                            if (ii < 0 || jj < 0 || ii >= static_cast<long>(side) || jj >= static_cast<long>(side)) {
                                continue;
                            }
                            sum += field[static_cast<std::size_t>(ii) * side + static_cast<std::size_t>(jj)];
                            ++cnt;
                        }
                    }
                    tmp[i * side + j] = sum / cnt;
                }
            }
            field.swap(tmp);
        }
        std::vector<double> sorted = field;
        std::sort(sorted.begin(), sorted.end());
        double thresh = sorted[(m * 3) / 4];
        std::vector<double> tpl(m);
        for (std::size_t i = 0; i < m; ++i) tpl[i] = field[i] > thresh ? 1.0 : 0.0;
        templates[static_cast<std::size_t>(c)] = std::move(tpl);
    }

    std::size_t n = n_per_class * static_cast<std::size_t>(classes);
    Dataset ds;
    ds.images = Tensor(Shape{n, 1, side, side});
    ds.labels.resize(n);
    ds.num_classes = classes;
    std::size_t row = 0;
    for (int c = 0; c < classes; ++c) {
        const auto& tpl = templates[static_cast<std::size_t>(c)];
        for (std::size_t k = 0; k < n_per_class; ++k, ++row) {
            auto rng = substream(seed, "desk.sample", row);
            std::uniform_real_distribution<double> ampd(0.7, 1.0);
            std::uniform_int_distribution<int> shiftd(-2, 2);
            std::normal_distribution<double> noise(0.0, 0.15);
            double amp = ampd(rng);
            int dy = shiftd(rng), dx = shiftd(rng);
            double* out = ds.images.data() + row * m;
            for (std::size_t i = 0; i < side; ++i) {
                for (std::size_t j = 0; j < side; ++j) {
                    long si = static_cast<long>(i) - dy, sj = static_cast<long>(j) - dx;
                    double base = 0.0;
                    if (si >= 0 && sj >= 0 && si < static_cast<long>(side) && sj < static_cast<long>(side)) {
                        base = amp * tpl[static_cast<std::size_t>(si) * side + static_cast<std::size_t>(sj)];
                    }
                    out[i * side + j] = quantize_px(base + noise(rng));
                }
            }
            ds.labels[row] = c;
        }
    }
    ds.provenance = "desk:seed=" + std::to_string(seed);
    ds.validate();
    return ds;
}

std::pair<Dataset, Dataset> split(const Dataset& ds, double fraction, std::uint64_t seed) {
    if (!(fraction > 0 && fraction < 1)) throw std::invalid_argument("split: fraction must be in (0,1)");
    std::vector<std::size_t> idx(ds.size());
    std::iota(idx.begin(), idx.end(), 0);
    auto rng = substream(seed, "split");
    std::shuffle(idx.begin(), idx.end(), rng);
    auto cut = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(ds.size())));
    if (cut == 0 || cut == ds.size()) throw std::invalid_argument("split: a side would be empty");
    std::vector<std::size_t> a(idx.begin(), idx.begin() + static_cast<long>(cut));
    std::vector<std::size_t> b(idx.begin() + static_cast<long>(cut), idx.end());
    Dataset train = ds.subset(a);
    Dataset test = ds.subset(b);
    train.split_tag = "train";
    test.split_tag = "test";
    return {std::move(train), std::move(test)};
}

}  // namespace advlab
