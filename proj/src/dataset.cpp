#include "pacbayes/dataset.hpp"

#include "pacbayes/rng.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>

namespace pacbayes {

void LabeledDataset::validate() const {
    if (features.rows() != static_cast<long>(labels.size()))
        throw std::invalid_argument("LabeledDataset: feature rows and label count differ");
    if (!source_index.empty() && features.rows() != static_cast<long>(source_index.size()))
        throw std::invalid_argument("LabeledDataset: source_index size mismatch");
    for (int y : labels)
        if (y < 0 || y >= class_count)
            throw std::invalid_argument("LabeledDataset: label outside [0, class_count)");
}

std::vector<std::uint8_t> gunzip(const std::vector<std::uint8_t>& bytes) {
    z_stream zs;
    std::memset(&zs, 0, sizeof(zs));
    if (inflateInit2(&zs, 15 + 16) != Z_OK) throw IdxParseError("gunzip: inflateInit2 failed");
    std::vector<std::uint8_t> out;
    out.reserve(bytes.size() * 4);
    std::uint8_t buf[1 << 16];
    zs.next_in = const_cast<std::uint8_t*>(bytes.data());
    zs.avail_in = static_cast<uInt>(bytes.size());
    int rc = Z_OK;
    do {
        zs.next_out = buf;
        zs.avail_out = sizeof(buf);
        rc = inflate(&zs, Z_NO_FLUSH);
        if (rc != Z_OK && rc != Z_STREAM_END) {
            inflateEnd(&zs);
            throw IdxParseError("gunzip: corrupt gzip stream (zlib rc " + std::to_string(rc) + ")");
        }
        out.insert(out.end(), buf, buf + (sizeof(buf) - zs.avail_out));
    } while (rc != Z_STREAM_END);
    inflateEnd(&zs);
    return out;
}

static bool is_gzip(const std::vector<std::uint8_t>& b) {
    return b.size() >= 2 && b[0] == 0x1f && b[1] == 0x8b;
}

static std::uint32_t read_u32be(const std::vector<std::uint8_t>& b, std::size_t off, const char* field) {
    if (off + 4 > b.size())
        throw IdxParseError(std::string("parse_idx: truncated ") + field + " at byte " + std::to_string(off));
    return (std::uint32_t(b[off]) << 24) | (std::uint32_t(b[off + 1]) << 16) |
           (std::uint32_t(b[off + 2]) << 8) | std::uint32_t(b[off + 3]);
}

LabeledDataset parse_idx(const std::vector<std::uint8_t>& images_bytes,
                         const std::vector<std::uint8_t>& labels_bytes) {
    const std::vector<std::uint8_t> img = is_gzip(images_bytes) ? gunzip(images_bytes) : images_bytes;
    const std::vector<std::uint8_t> lab = is_gzip(labels_bytes) ? gunzip(labels_bytes) : labels_bytes;

    std::uint32_t img_magic = read_u32be(img, 0, "image magic");
    if (img_magic != 0x00000803u)
        throw IdxParseError("parse_idx: bad image magic at byte 0 (got 0x" + std::to_string(img_magic) + ", want 0x803)");
    std::uint32_t n = read_u32be(img, 4, "image count");
    std::uint32_t rows = read_u32be(img, 8, "image rows");
    std::uint32_t cols = read_u32be(img, 12, "image cols");
    std::size_t need = 16 + std::size_t(n) * rows * cols;
    if (img.size() < need)
        throw IdxParseError("parse_idx: image payload truncated at byte " + std::to_string(img.size()) +
                            " (need " + std::to_string(need) + ")");

    std::uint32_t lab_magic = read_u32be(lab, 0, "label magic");
    if (lab_magic != 0x00000801u)
        throw IdxParseError("parse_idx: bad label magic at byte 0 (got 0x" + std::to_string(lab_magic) + ", want 0x801)");
    std::uint32_t ln = read_u32be(lab, 4, "label count");
    if (ln != n)
        throw IdxParseError("parse_idx: image count " + std::to_string(n) + " != label count " + std::to_string(ln));
    if (lab.size() < 8 + std::size_t(ln))
        throw IdxParseError("parse_idx: label payload truncated at byte " + std::to_string(lab.size()));

    LabeledDataset ds;
    long d = static_cast<long>(rows) * cols;
    ds.features.resize(n, d);
    ds.labels.resize(n);
    ds.source_index.resize(n);
    int max_label = 0;
    for (std::uint32_t i = 0; i < n; ++i) {
        const std::uint8_t* px = img.data() + 16 + std::size_t(i) * d;
        for (long j = 0; j < d; ++j) ds.features(i, j) = px[j] / 255.0;
        ds.labels[i] = lab[8 + i];
        max_label = std::max(max_label, ds.labels[i]);
        ds.source_index[i] = i;
    }
    ds.class_count = max_label + 1;
    ds.validate();
    return ds;
}

static std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IdxParseError("load_idx: cannot open " + path);
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path) {
    return parse_idx(read_file(images_path), read_file(labels_path));
}

static void push_u32be(std::vector<std::uint8_t>& b, std::uint32_t v) {
    b.push_back(std::uint8_t(v >> 24));
    b.push_back(std::uint8_t(v >> 16));
    b.push_back(std::uint8_t(v >> 8));
    b.push_back(std::uint8_t(v));
}

std::vector<std::uint8_t> serialize_idx_images(const LabeledDataset& ds) {
    long d = ds.dim();
    long r = static_cast<long>(std::lround(std::sqrt(double(d))));
    std::uint32_t rows = 1, cols = static_cast<std::uint32_t>(d);
    if (r * r == d) rows = cols = static_cast<std::uint32_t>(r);
    std::vector<std::uint8_t> out;
    out.reserve(16 + std::size_t(ds.n()) * d);
    push_u32be(out, 0x00000803u);
    push_u32be(out, static_cast<std::uint32_t>(ds.n()));
    push_u32be(out, rows);
    push_u32be(out, cols);
    for (long i = 0; i < ds.n(); ++i)
        for (long j = 0; j < d; ++j) {
            double v = std::lround(ds.features(i, j) * 255.0);
            out.push_back(static_cast<std::uint8_t>(std::min(255.0, std::max(0.0, v))));
        }
    return out;
}

std::vector<std::uint8_t> serialize_idx_labels(const LabeledDataset& ds) {
    std::vector<std::uint8_t> out;
    out.reserve(8 + ds.labels.size());
    push_u32be(out, 0x00000801u);
    push_u32be(out, static_cast<std::uint32_t>(ds.labels.size()));
    for (int y : ds.labels) out.push_back(static_cast<std::uint8_t>(y));
    return out;
}

// Orthonormal coordinates of a regular k-simplex with pairwise distance 1,
// living in R^(k-1): center e_1..e_k, Gram-Schmidt a basis of the sum-zero
// hyperplane, scale by 1/sqrt(2) (the centered unit vectors are sqrt(2) apart).
static Eigen::MatrixXd simplex_vertices(int k) {
    Eigen::MatrixXd c = Eigen::MatrixXd::Identity(k, k).array() - 1.0 / k;
    if (k == 1) return Eigen::MatrixXd::Zero(1, 1);
    Eigen::MatrixXd span(k, k - 1);
    for (int j = 0; j < k - 1; ++j) span.col(j) = c.row(j).transpose();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(span);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(k, k - 1);
    return (c * q) / std::sqrt(2.0); // k x (k-1), rows are vertices
}

LabeledDataset make_blobs(long n, int k, int d, double separation, std::uint64_t seed) {
    if (n < 1 || k < 1 || d < 1) throw std::invalid_argument("make_blobs: need n, k, d >= 1");
    if (k - 1 > d) throw std::invalid_argument("make_blobs: simplex embedding needs k-1 <= d");
    if (!(separation >= 0.0)) throw std::invalid_argument("make_blobs: separation must be >= 0");

    Eigen::MatrixXd centers = Eigen::MatrixXd::Zero(k, d);
    if (k > 1) centers.leftCols(k - 1) = simplex_vertices(k) * separation;

    LabeledDataset ds;
    ds.features.resize(n, d);
    ds.labels.resize(n);
    ds.source_index.resize(n);
    ds.class_count = k;
    long base = n / k, extra = n % k, row = 0;
    for (int c = 0; c < k; ++c) {
        long sz = base + (c < extra ? 1 : 0);
        for (long i = 0; i < sz; ++i, ++row) {
            CounterRng rng(seed, {0x626c6f62ULL, static_cast<std::uint64_t>(row)});
            for (int j = 0; j < d; ++j) ds.features(row, j) = centers(c, j) + rng.next_gaussian();
            ds.labels[row] = c;
            ds.source_index[row] = row;
        }
    }
    return ds;
}

std::vector<long> split_permutation(long n, std::uint64_t seed) {
    std::vector<long> perm(n);
    for (long i = 0; i < n; ++i) perm[i] = i;
    CounterRng rng(seed, {0x73706c6974ULL});
    for (long i = n - 1; i > 0; --i) {
        long j = static_cast<long>(rng.next_below(static_cast<std::uint64_t>(i) + 1));
        std::swap(perm[i], perm[j]);
    }
    return perm;
}

std::vector<LabeledDataset> split_dataset(const LabeledDataset& ds, const std::vector<long>& sizes,
                                          std::uint64_t seed) {
    long total = 0;
    for (long s : sizes) {
        if (s < 1) throw std::invalid_argument("split_dataset: chunk sizes must be positive");
        total += s;
    }
    if (total > ds.n()) throw std::invalid_argument("split_dataset: chunk sizes exceed dataset size");

    std::vector<long> perm = split_permutation(ds.n(), seed);
    std::vector<LabeledDataset> chunks;
    chunks.reserve(sizes.size());
    long off = 0;
    for (long s : sizes) {
        LabeledDataset c;
        c.features.resize(s, ds.dim());
        c.labels.resize(s);
        c.source_index.resize(s);
        c.class_count = ds.class_count;
        for (long i = 0; i < s; ++i) {
            long src = perm[off + i];
            c.features.row(i) = ds.features.row(src);
            c.labels[i] = ds.labels[src];
            c.source_index[i] = ds.source_index.empty() ? src : ds.source_index[src];
        }
        chunks.push_back(std::move(c));
        off += s;
    }
    return chunks;
}

LabeledDataset concat_datasets(const std::vector<LabeledDataset>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_datasets: no parts");
    long n = 0;
    for (const auto& p : parts) n += p.n();
    LabeledDataset out;
    out.features.resize(n, parts.front().dim());
    out.labels.resize(n);
    out.source_index.resize(n);
    out.class_count = parts.front().class_count;
    long row = 0;
    for (const auto& p : parts) {
        if (p.dim() != out.dim() || p.class_count != out.class_count)
            throw std::invalid_argument("concat_datasets: incompatible parts");
        for (long i = 0; i < p.n(); ++i, ++row) {
            out.features.row(row) = p.features.row(i);
            out.labels[row] = p.labels[i];
            out.source_index[row] = p.source_index.empty() ? row : p.source_index[i];
        }
    }
    return out;
}

} // namespace pacbayes
