#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pacbayes/dataset.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <set>

using namespace pacbayes;

namespace {

std::vector<std::uint8_t> make_images(std::uint32_t n, std::uint32_t rows, std::uint32_t cols) {
    std::vector<std::uint8_t> b;
    auto push32 = [&](std::uint32_t v) {
        b.push_back(v >> 24);
        b.push_back(v >> 16);
        b.push_back(v >> 8);
        b.push_back(v);
    };
    push32(0x803);
    push32(n);
    push32(rows);
    push32(cols);
    for (std::uint32_t i = 0; i < n * rows * cols; ++i) b.push_back(static_cast<std::uint8_t>((i * 37 + 11) % 256));
    return b;
}

std::vector<std::uint8_t> make_labels(std::uint32_t n) {
    std::vector<std::uint8_t> b;
    auto push32 = [&](std::uint32_t v) {
        b.push_back(v >> 24);
        b.push_back(v >> 16);
        b.push_back(v >> 8);
        b.push_back(v);
    };
    push32(0x801);
    push32(n);
    for (std::uint32_t i = 0; i < n; ++i) b.push_back(static_cast<std::uint8_t>(i % 10));
    return b;
}

std::vector<std::uint8_t> gzip_compress(const std::vector<std::uint8_t>& in) {
    z_stream zs;
    std::memset(&zs, 0, sizeof(zs));
    REQUIRE(deflateInit2(&zs, Z_BEST_SPEED, Z_DEFLATED, 15 + 16, 8, Z_DEFAULT_STRATEGY) == Z_OK);
    std::vector<std::uint8_t> out(deflateBound(&zs, in.size()) + 32);
    zs.next_in = const_cast<std::uint8_t*>(in.data());
    zs.avail_in = static_cast<uInt>(in.size());
    zs.next_out = out.data();
    zs.avail_out = static_cast<uInt>(out.size());
    REQUIRE(deflate(&zs, Z_FINISH) == Z_STREAM_END);
    out.resize(out.size() - zs.avail_out);
    deflateEnd(&zs);
    return out;
}

} // namespace

TEST_CASE("parse_idx happy path and pixel scaling") {
    auto ds = parse_idx(make_images(7, 4, 4), make_labels(7));
    CHECK(ds.n() == 7);
    CHECK(ds.dim() == 16);
    CHECK(ds.class_count == 7); // labels 0..6 observed
    CHECK(ds.features(0, 0) == doctest::Approx(11.0 / 255.0));
    CHECK(ds.features.minCoeff() >= 0.0);
    CHECK(ds.features.maxCoeff() <= 1.0);
}

TEST_CASE("parse_idx rejects malformed input with located errors") {
    auto img = make_images(3, 2, 2);
    auto lab = make_labels(3);

    auto bad_magic = img;
    bad_magic[3] = 0x01;
    CHECK_THROWS_AS((void)parse_idx(bad_magic, lab), IdxParseError);

    auto truncated = img;
    truncated.resize(truncated.size() - 2);
    CHECK_THROWS_AS((void)parse_idx(truncated, lab), IdxParseError);

    CHECK_THROWS_AS((void)parse_idx(img, make_labels(4)), IdxParseError);

    auto short_header = std::vector<std::uint8_t>{0x00, 0x00};
    CHECK_THROWS_AS((void)parse_idx(short_header, lab), IdxParseError);

    try {
        (void)parse_idx(truncated, lab);
        CHECK(false);
    } catch (const IdxParseError& e) {
        CHECK(std::string(e.what()).find("byte") != std::string::npos);
    }
}

TEST_CASE("parse_idx accepts gzip-compressed buffers") {
    auto img = make_images(5, 3, 3);
    auto lab = make_labels(5);
    auto plain = parse_idx(img, lab);
    auto zipped = parse_idx(gzip_compress(img), gzip_compress(lab));
    CHECK(plain.features == zipped.features);
    CHECK(plain.labels == zipped.labels);

    auto corrupt = gzip_compress(img);
    corrupt[10] ^= 0xff;
    corrupt[11] ^= 0xff;
    corrupt[12] ^= 0xff;
    CHECK_THROWS_AS((void)parse_idx(corrupt, lab), IdxParseError);
}

TEST_CASE("parse -> serialize -> parse round-trip") {
    auto img = make_images(9, 4, 4);
    auto lab = make_labels(9);
    auto ds = parse_idx(img, lab);
    auto img2 = serialize_idx_images(ds);
    auto lab2 = serialize_idx_labels(ds);
    CHECK(img2 == img);
    CHECK(lab2 == lab);
    auto ds2 = parse_idx(img2, lab2);
    CHECK(ds2.features == ds.features);
    CHECK(ds2.labels == ds.labels);
}

TEST_CASE("make_blobs geometry: centroids form the requested simplex") {
    const long n = 30000;
    const double sep = 3.0;
    auto ds = make_blobs(n, 3, 2, sep, 99);
    ds.validate();
    Eigen::MatrixXd cent = Eigen::MatrixXd::Zero(3, 2);
    Eigen::Vector3d cnt = Eigen::Vector3d::Zero();
    for (long i = 0; i < n; ++i) {
        cent.row(ds.labels[i]) += ds.features.row(i);
        cnt[ds.labels[i]] += 1.0;
    }
    for (int c = 0; c < 3; ++c) cent.row(c) /= cnt[c];
    for (int a = 0; a < 3; ++a)
        for (int b = a + 1; b < 3; ++b)
            CHECK((cent.row(a) - cent.row(b)).norm() == doctest::Approx(sep).epsilon(0.05));
    // per-class sizes as equal as possible
    CHECK(cnt.maxCoeff() - cnt.minCoeff() <= 1.0);
}

TEST_CASE("make_blobs determinism and failure modes") {
    auto a = make_blobs(100, 2, 2, 4.0, 7);
    auto b = make_blobs(100, 2, 2, 4.0, 7);
    CHECK(a.features == b.features);
    auto c = make_blobs(100, 2, 2, 4.0, 8);
    CHECK(a.features != c.features);
    CHECK_THROWS_AS((void)make_blobs(10, 5, 2, 1.0, 0), std::invalid_argument);
    CHECK_THROWS_AS((void)make_blobs(0, 2, 2, 1.0, 0), std::invalid_argument);
    CHECK_THROWS_AS((void)make_blobs(10, 2, 2, -1.0, 0), std::invalid_argument);
}

TEST_CASE("make_blobs separation 0 collapses to a single cluster") {
    auto ds = make_blobs(4000, 2, 2, 0.0, 3);
    Eigen::Vector2d m0 = Eigen::Vector2d::Zero(), m1 = Eigen::Vector2d::Zero();
    long c0 = 0, c1 = 0;
    for (long i = 0; i < ds.n(); ++i) {
        if (ds.labels[i] == 0) {
            m0 += ds.features.row(i).transpose();
            ++c0;
        } else {
            m1 += ds.features.row(i).transpose();
            ++c1;
        }
    }
    CHECK((m0 / c0 - m1 / c1).norm() < 0.1);
}

TEST_CASE("separated blobs admit a near-Bayes nearest-centroid rule") {
    // d(centers) = 4 => Bayes risk Phi(-2) ~ 0.0228; nearest-centroid is Bayes
    auto train = make_blobs(4000, 2, 2, 4.0, 11);
    auto test = make_blobs(20000, 2, 2, 4.0, 12);
    Eigen::MatrixXd cent = Eigen::MatrixXd::Zero(2, 2);
    Eigen::Vector2d cnt = Eigen::Vector2d::Zero();
    for (long i = 0; i < train.n(); ++i) {
        cent.row(train.labels[i]) += train.features.row(i);
        cnt[train.labels[i]] += 1.0;
    }
    cent.row(0) /= cnt[0];
    cent.row(1) /= cnt[1];
    long err = 0;
    for (long i = 0; i < test.n(); ++i) {
        double d0 = (test.features.row(i) - cent.row(0)).squaredNorm();
        double d1 = (test.features.row(i) - cent.row(1)).squaredNorm();
        int pred = d1 < d0 ? 1 : 0;
        err += pred != test.labels[i];
    }
    CHECK(static_cast<double>(err) / test.n() <= 0.05);
}

TEST_CASE("split_dataset partitions without overlap and deterministically") {
    auto ds = make_blobs(100, 2, 2, 2.0, 5);
    auto chunks = split_dataset(ds, {25, 25, 50}, 17);
    REQUIRE(chunks.size() == 3);
    CHECK(chunks[0].n() == 25);
    CHECK(chunks[2].n() == 50);
    std::set<long> seen;
    for (const auto& c : chunks)
        for (long s : c.source_index) seen.insert(s);
    CHECK(seen.size() == 100); // exact cover, no duplicates

    auto again = split_dataset(ds, {25, 25, 50}, 17);
    for (int i = 0; i < 3; ++i) {
        CHECK(chunks[i].features == again[i].features);
        CHECK(chunks[i].source_index == again[i].source_index);
    }
    auto other = split_dataset(ds, {25, 25, 50}, 18);
    CHECK(chunks[0].source_index != other[0].source_index);

    CHECK_THROWS_AS((void)split_dataset(ds, {80, 30}, 1), std::invalid_argument);
    CHECK_THROWS_AS((void)split_dataset(ds, {0, 50}, 1), std::invalid_argument);
}

TEST_CASE("split rows carry their source content") {
    auto ds = make_blobs(60, 3, 4, 2.0, 9);
    auto chunks = split_dataset(ds, {20, 40}, 23);
    for (const auto& c : chunks)
        for (long i = 0; i < c.n(); ++i) {
            long src = c.source_index[i];
            CHECK(c.features.row(i) == ds.features.row(src));
            CHECK(c.labels[i] == ds.labels[src]);
        }
    auto merged = concat_datasets({chunks[0], chunks[1]});
    CHECK(merged.n() == 60);
    CHECK(merged.class_count == 3);
}
