#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "advlab/dataset.hpp"
#include "advlab/rng.hpp"
#include "doctest.h"

using namespace advlab;

namespace {

std::filesystem::path temp_dir() {
    auto dir = std::filesystem::temp_directory_path() / "advlab-tests";
    std::filesystem::create_directories(dir);
    return dir;
}

std::vector<char> file_bytes(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    REQUIRE(f.good());
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

bool bit_equal(const Tensor& a, const Tensor& b) {
    return a.shape() == b.shape() && std::memcmp(a.data(), b.data(), a.numel() * sizeof(double)) == 0;
}

// Sorted per-image fingerprints; content equality that ignores ordering.
std::vector<std::uint64_t> image_fingerprints(const Dataset& ds) {
    std::vector<std::uint64_t> out(ds.size());
    std::size_t m = ds.pixels_per_image();
    for (std::size_t i = 0; i < ds.size(); ++i) {
        std::uint64_t h = fnv1a64(reinterpret_cast<const unsigned char*>(ds.images.data() + i * m),
                                  m * sizeof(double));
        unsigned char lab = static_cast<unsigned char>(ds.labels[i]);
        out[i] = fnv1a64(&lab, 1, h);
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

TEST_CASE("idx files round-trip quantized pixels bit-exactly") {
    Dataset ds = make_desk_corpus(6, 4, 123);
    auto dir = temp_dir();
    auto imgs = (dir / "rt-images.idx").string();
    auto labs = (dir / "rt-labels.idx").string();

    save_idx(ds, imgs, labs);
    Dataset back = load_idx(imgs, labs);

    CHECK(bit_equal(back.images, ds.images));
    CHECK(back.labels == ds.labels);
    CHECK(back.num_classes == ds.num_classes);

    // a second save of the loaded data reproduces the files byte for byte
    auto imgs2 = (dir / "rt-images2.idx").string();
    auto labs2 = (dir / "rt-labels2.idx").string();
    save_idx(back, imgs2, labs2);
    CHECK(file_bytes(imgs) == file_bytes(imgs2));
    CHECK(file_bytes(labs) == file_bytes(labs2));
}

TEST_CASE("idx round-trip preserves the endpoints of the pixel grid") {
    Dataset ds;
    ds.images = Tensor(Shape{2, 1, 1, 3}, {0.0, 1.0, 128.0 / 255.0, 17.0 / 255.0, 254.0 / 255.0, 1.0});
    ds.labels = {0, 1};
    ds.num_classes = 2;
    auto dir = temp_dir();
    auto imgs = (dir / "ep-images.idx").string();
    auto labs = (dir / "ep-labels.idx").string();
    save_idx(ds, imgs, labs);
    Dataset back = load_idx(imgs, labs);
    CHECK(bit_equal(back.images, ds.images));
    CHECK(back.images[0] == 0.0);
    CHECK(back.images[1] == 1.0);
}

TEST_CASE("idx loader rejects malformed files") {
    auto dir = temp_dir();
    auto good_i = (dir / "ok-images.idx").string();
    auto good_l = (dir / "ok-labels.idx").string();
    Dataset ds = make_desk_corpus(2, 2, 5);
    save_idx(ds, good_i, good_l);

    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_idx((dir / "absent.idx").string(), good_l), std::runtime_error);
    }
    SUBCASE("bad magic") {
        auto bad = (dir / "bad-magic.idx").string();
        std::ofstream f(bad, std::ios::binary);
        f << "\x00\x00\x09\x99 junk";
        f.close();
        CHECK_THROWS_AS(load_idx(bad, good_l), std::runtime_error);
    }
    SUBCASE("truncated pixels") {
        auto cut = dir / "cut-images.idx";
        std::filesystem::copy_file(good_i, cut, std::filesystem::copy_options::overwrite_existing);
        std::filesystem::resize_file(cut, std::filesystem::file_size(cut) - 10);
        CHECK_THROWS_AS(load_idx(cut.string(), good_l), std::runtime_error);
    }
    SUBCASE("count mismatch between images and labels") {
        Dataset small = ds.subset({0, 1});
        auto other_l = (dir / "short-labels.idx").string();
        auto other_i = (dir / "short-images.idx").string();
        save_idx(small, other_i, other_l);
        CHECK_THROWS_AS(load_idx(good_i, other_l), std::runtime_error);
    }
}

TEST_CASE("blob corpus is deterministic, labeled, and spans [0,1]") {
    Dataset a = make_blobs(50, 3, 2, 4.0, 77);
    Dataset b = make_blobs(50, 3, 2, 4.0, 77);
    Dataset c = make_blobs(50, 3, 2, 4.0, 78);

    CHECK(a.images.shape() == Shape{150, 1, 1, 2});
    CHECK(bit_equal(a.images, b.images));
    CHECK(a.labels == b.labels);
    CHECK_FALSE(bit_equal(a.images, c.images));

    for (int cls = 0; cls < 3; ++cls) {
        CHECK(std::count(a.labels.begin(), a.labels.end(), cls) == 50);
    }
    double lo = 1e9, hi = -1e9;
    for (double v : a.images.values()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    CHECK(lo == 0.0);  // min-max squash pins the extremes
    CHECK(hi == 1.0);

    // class means must be separated for the corpus to be learnable
    std::vector<double> mx(3, 0.0), my(3, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        mx[static_cast<std::size_t>(a.labels[i])] += a.images[i * 2];
        my[static_cast<std::size_t>(a.labels[i])] += a.images[i * 2 + 1];
    }
    for (int cls = 0; cls < 3; ++cls) {
        mx[static_cast<std::size_t>(cls)] /= 50.0;
        my[static_cast<std::size_t>(cls)] /= 50.0;
    }
    for (int p = 0; p < 3; ++p)
        for (int q = p + 1; q < 3; ++q) {
            double dx = mx[static_cast<std::size_t>(p)] - mx[static_cast<std::size_t>(q)];
            double dy = my[static_cast<std::size_t>(p)] - my[static_cast<std::size_t>(q)];
            CHECK(std::sqrt(dx * dx + dy * dy) > 0.05);
        }

    CHECK_THROWS_AS(make_blobs(0, 3, 2, 4.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(make_blobs(10, 1, 2, 4.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(make_blobs(10, 3, 2, 0.0, 1), std::invalid_argument);
}

TEST_CASE("desk corpus emits quantized 28x28 images deterministically") {
    Dataset a = make_desk_corpus(5, 3, 9);
    Dataset b = make_desk_corpus(5, 3, 9);

    CHECK(a.images.shape() == Shape{15, 1, 28, 28});
    CHECK(bit_equal(a.images, b.images));
    CHECK(a.num_classes == 3);
    for (int cls = 0; cls < 3; ++cls) {
        CHECK(std::count(a.labels.begin(), a.labels.end(), cls) == 5);
    }
    for (double v : a.images.values()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        double steps = v * 255.0;
        CHECK(std::abs(steps - std::round(steps)) < 1e-9);  // on the u8 grid
    }
    // images within a class differ (jitter is applied per sample)
    CHECK_FALSE(bit_equal(a.image(0), a.image(1)));
}

TEST_CASE("split partitions the content and respects the fraction") {
    Dataset ds = make_blobs(40, 3, 2, 4.0, 31);
    auto [train, test] = split(ds, 5.0 / 6.0, 11);

    CHECK(train.size() == 100);
    CHECK(test.size() == 20);
    CHECK(train.split_tag == "train");
    CHECK(test.split_tag == "test");
    CHECK(train.num_classes == 3);
    CHECK(test.num_classes == 3);

    // every sample lands on exactly one side
    std::vector<std::uint64_t> whole = image_fingerprints(ds);
    std::vector<std::uint64_t> lhs = image_fingerprints(train);
    std::vector<std::uint64_t> rhs = image_fingerprints(test);
    lhs.insert(lhs.end(), rhs.begin(), rhs.end());
    std::sort(lhs.begin(), lhs.end());
    CHECK(lhs == whole);

    // deterministic in the seed
    auto [t2, e2] = split(ds, 5.0 / 6.0, 11);
    CHECK(bit_equal(t2.images, train.images));
    auto [t3, e3] = split(ds, 5.0 / 6.0, 12);
    CHECK_FALSE(bit_equal(t3.images, train.images));

    CHECK_THROWS_AS(split(ds, 0.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(split(ds, 1.0, 1), std::invalid_argument);
    Dataset two = ds.subset({0, 1});
    CHECK_THROWS_AS(split(two, 0.01, 1), std::invalid_argument);  // empty side
}

TEST_CASE("dataset accessors check their arguments") {
    Dataset ds = make_blobs(5, 2, 3, 4.0, 2);
    CHECK(ds.image(0).shape() == Shape{1, 1, 1, 3});
    CHECK_THROWS_AS(ds.image(10), std::invalid_argument);
    CHECK_THROWS_AS(ds.subset({0, 99}), std::invalid_argument);

    Dataset bad = ds;
    bad.labels.push_back(0);
    CHECK_THROWS_AS(bad.validate(), std::runtime_error);

    Dataset bad2 = ds;
    bad2.images[0] = 1.5;
    CHECK_THROWS_AS(bad2.validate(), std::runtime_error);

    Dataset bad3 = ds;
    bad3.labels[0] = 7;
    CHECK_THROWS_AS(bad3.validate(), std::runtime_error);
}
