#include "mmf/episodes.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "mmf/error.hpp"
#include "mmf/textfmt.hpp"

namespace mmf {

namespace {

constexpr int kEpisodeRetries = 100;

std::string strip(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split_on(const std::string& s, const std::string& sep) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (true) {
        std::size_t next = s.find(sep, pos);
        if (next == std::string::npos) {
            out.push_back(s.substr(pos));
            break;
        }
        out.push_back(s.substr(pos, next - pos));
        pos = next + sep.size();
    }
    return out;
}

bool parse_i64(const std::string& s, std::int64_t* out) {
    const std::string t = strip(s);
    if (t.empty()) return false;
    char* end = nullptr;
    errno = 0;
    long long v = std::strtoll(t.c_str(), &end, 10);
    if (errno != 0 || end != t.c_str() + t.size()) return false;
    *out = static_cast<std::int64_t>(v);
    return true;
}

bool parse_f64(const std::string& s, double* out) {
    const std::string t = strip(s);
    if (t.empty()) return false;
    char* end = nullptr;
    errno = 0;
    double v = std::strtod(t.c_str(), &end);
    if (errno == ERANGE || end != t.c_str() + t.size()) return false;
    *out = v;
    return true;
}

[[noreturn]] void parse_fail(const std::string& path, std::size_t line,
                             const std::string& what) {
    fail(ErrorCode::parse, path + ":" + std::to_string(line) + ": " + what);
}

bool parse_triplet_line(const std::string& line, TripletFormat format, Triplet* out) {
    std::vector<std::string> fields;
    switch (format) {
        case TripletFormat::movielens_tab: fields = split_on(line, "\t"); break;
        case TripletFormat::movielens_dcolon: fields = split_on(line, "::"); break;
        case TripletFormat::csv: fields = split_on(line, ","); break;
    }
    if (fields.size() < 3) return false;
    return parse_i64(fields[0], &out->user) && parse_i64(fields[1], &out->item) &&
           parse_f64(fields[2], &out->rating);
}

struct BlockIndex {
    std::unordered_map<std::int64_t, std::size_t> row_of;
    std::unordered_map<std::int64_t, std::size_t> col_of;
};

RatingMatrix build_block(const std::vector<Triplet>& triplets,
                         const std::vector<std::int64_t>& users,
                         const std::vector<std::int64_t>& items, const BlockIndex& index) {
    RatingMatrix block;
    block.row_ids = users;
    block.col_ids = items;
    block.values = Tensor({users.size(), items.size()});
    block.mask = Tensor({users.size(), items.size()});
    for (const auto& t : triplets) {
        auto r = index.row_of.find(t.user);
        if (r == index.row_of.end()) continue;
        auto c = index.col_of.find(t.item);
        if (c == index.col_of.end()) continue;
        block.values.at2(r->second, c->second) = t.rating;
        block.mask.at2(r->second, c->second) = 1.0;
    }
    return block;
}

void check_norm_header(bool got_mean, bool got_std, const std::string& path,
                       std::size_t line) {
    if (!got_mean || !got_std) parse_fail(path, line, "missing norm_mean/norm_std header");
}

}  // namespace

std::size_t RatingMatrix::observed_count() const {
    std::size_t count = 0;
    for (std::size_t i = 0; i < mask.numel(); ++i) count += mask[i] != 0.0 ? 1 : 0;
    return count;
}

TripletFormat triplet_format_from_name(const std::string& name) {
    if (name == "movielens_tab") return TripletFormat::movielens_tab;
    if (name == "movielens_dcolon") return TripletFormat::movielens_dcolon;
    if (name == "csv") return TripletFormat::csv;
    fail(ErrorCode::invalid_argument, "unknown triplet format: " + name);
}

const char* triplet_format_name(TripletFormat format) {
    switch (format) {
        case TripletFormat::movielens_tab: return "movielens_tab";
        case TripletFormat::movielens_dcolon: return "movielens_dcolon";
        default: return "csv";
    }
}

std::vector<Triplet> load_triplets(const std::string& path, TripletFormat format) {
    std::ifstream in(path);
    require(in.good(), ErrorCode::io, "cannot open " + path);
    std::vector<Triplet> out;
    std::string line;
    std::size_t lineno = 0;
    bool first_content_line = true;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = strip(line);
        if (t.empty()) continue;
        Triplet trip;
        if (!parse_triplet_line(t, format, &trip)) {
            // a csv header line is allowed once, before any data
            if (format == TripletFormat::csv && first_content_line) {
                first_content_line = false;
                continue;
            }
            parse_fail(path, lineno, "malformed " +
                                         std::string(triplet_format_name(format)) +
                                         " line: " + t);
        }
        first_content_line = false;
        out.push_back(trip);
    }
    require(!out.empty(), ErrorCode::parse, path + ": no rating triplets found");
    return out;
}

double normalize_value(double v, double mean, double std) { return (v - mean) / std; }

double denormalize_value(double v, double mean, double std) { return v * std + mean; }

DatasetSplit partition_and_normalize(const std::vector<Triplet>& triplets,
                                     const std::array<double, 3>& fractions,
                                     std::uint64_t seed) {
    require(!triplets.empty(), ErrorCode::invalid_argument, "no triplets to partition");
    double total = fractions[0] + fractions[1] + fractions[2];
    require(std::abs(total - 1.0) < 1e-9, ErrorCode::invalid_argument,
            "split fractions must sum to 1");
    for (double f : fractions) {
        require(f >= 0.0, ErrorCode::invalid_argument, "split fractions must be nonnegative");
    }

    std::vector<std::int64_t> users, items;
    {
        std::unordered_map<std::int64_t, bool> seen_u, seen_i;
        for (const auto& t : triplets) {
            if (!seen_u.count(t.user)) {
                seen_u[t.user] = true;
                users.push_back(t.user);
            }
            if (!seen_i.count(t.item)) {
                seen_i[t.item] = true;
                items.push_back(t.item);
            }
        }
    }
    std::sort(users.begin(), users.end());
    std::sort(items.begin(), items.end());

    RngStream rng(seed);
    rng.shuffle(users);
    rng.shuffle(items);

    auto cut = [&](std::size_t n) {
        std::array<std::size_t, 3> sizes;
        sizes[0] = static_cast<std::size_t>(std::floor(n * fractions[0]));
        sizes[1] = static_cast<std::size_t>(std::floor(n * fractions[1]));
        sizes[2] = n - sizes[0] - sizes[1];
        return sizes;
    };
    auto usz = cut(users.size());
    auto isz = cut(items.size());

    DatasetSplit split;
    RatingMatrix* blocks[3] = {&split.train_block, &split.valid_block, &split.test_block};
    std::size_t uoff = 0, ioff = 0;
    for (int bi = 0; bi < 3; ++bi) {
        std::vector<std::int64_t> bu(users.begin() + uoff, users.begin() + uoff + usz[bi]);
        std::vector<std::int64_t> bitems(items.begin() + ioff,
                                         items.begin() + ioff + isz[bi]);
        uoff += usz[bi];
        ioff += isz[bi];
        BlockIndex index;
        for (std::size_t i = 0; i < bu.size(); ++i) index.row_of[bu[i]] = i;
        for (std::size_t i = 0; i < bitems.size(); ++i) index.col_of[bitems[i]] = i;
        *blocks[bi] = build_block(triplets, bu, bitems, index);
        require(blocks[bi]->observed_count() > 0, ErrorCode::sampling,
                "split block " + std::to_string(bi) +
                    " has no observed ratings; try another seed");
    }

    double sum = 0.0, sumsq = 0.0, count = 0.0;
    const RatingMatrix& tb = split.train_block;
    for (std::size_t i = 0; i < tb.values.numel(); ++i) {
        if (tb.mask[i] == 0.0) continue;
        sum += tb.values[i];
        sumsq += tb.values[i] * tb.values[i];
        count += 1.0;
    }
    const double mean = sum / count;
    const double var = sumsq / count - mean * mean;
    require(var > 0.0, ErrorCode::numeric,
            "training block ratings have zero variance; cannot normalize");
    split.norm_mean = mean;
    split.norm_std = std::sqrt(var);

    for (auto* block : blocks) {
        for (std::size_t i = 0; i < block->values.numel(); ++i) {
            if (block->mask[i] == 0.0) continue;
            block->values[i] = normalize_value(block->values[i], split.norm_mean,
                                               split.norm_std);
        }
    }
    return split;
}

MetaDataset dataset_from_split(const DatasetSplit& split) {
    MetaDataset ds;
    ds.train_blocks.push_back(split.train_block);
    ds.valid_blocks.push_back(split.valid_block);
    ds.test_blocks.push_back(split.test_block);
    ds.norm_mean = split.norm_mean;
    ds.norm_std = split.norm_std;
    return ds;
}

Episode sample_episode(const RatingMatrix& block, std::size_t n, std::size_t m, double ratio,
                       RngStream& rng) {
    require(ratio > 0.0 && ratio < 1.0, ErrorCode::invalid_argument,
            "episode ratio must lie strictly between 0 and 1");
    require(n >= 1 && m >= 1, ErrorCode::invalid_argument, "episode must be at least 1x1");
    require(block.rows() >= n && block.cols() >= m, ErrorCode::invalid_argument,
            "block " + shape_string(block.values) + " is smaller than requested " +
                std::to_string(n) + "x" + std::to_string(m) + " episode");

    for (int attempt = 0; attempt < kEpisodeRetries; ++attempt) {
        auto rows = rng.sample_without_replacement(block.rows(), n);
        auto cols = rng.sample_without_replacement(block.cols(), m);
        Episode ep;
        ep.x = Tensor({n, m});
        ep.b = Tensor({n, m});
        ep.xp = Tensor({n, m});
        ep.bp = Tensor({n, m});
        std::size_t train_count = 0, test_count = 0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < m; ++j) {
                if (block.mask.at2(rows[i], cols[j]) == 0.0) continue;
                const double v = block.values.at2(rows[i], cols[j]);
                if (rng.uniform() < ratio) {
                    ep.x.at2(i, j) = v;
                    ep.b.at2(i, j) = 1.0;
                    ++train_count;
                } else {
                    ep.xp.at2(i, j) = v;
                    ep.bp.at2(i, j) = 1.0;
                    ++test_count;
                }
            }
        }
        if (train_count >= 1 && test_count >= 1) return ep;
    }
    fail(ErrorCode::sampling,
         "could not sample a nonempty episode in " + std::to_string(kEpisodeRetries) +
             " attempts (block too sparse)");
}

std::vector<Episode> make_meta_test_suite(const std::vector<RatingMatrix>& blocks,
                                          std::size_t count, std::size_t n, std::size_t m,
                                          double holdout, RngStream& rng) {
    require(!blocks.empty(), ErrorCode::invalid_argument, "no blocks to sample from");
    require(holdout > 0.0 && holdout < 1.0, ErrorCode::invalid_argument,
            "holdout must lie strictly between 0 and 1");
    std::vector<Episode> suite;
    suite.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        suite.push_back(sample_episode(blocks[i % blocks.size()], n, m, 1.0 - holdout, rng));
    }
    return suite;
}

void save_taskset(const std::string& path, const std::vector<RatingMatrix>& blocks,
                  double norm_mean, double norm_std) {
    std::ofstream out(path);
    require(out.good(), ErrorCode::io, "cannot write " + path);
    out << "# taskset v1\n";
    out << "# tasks " << blocks.size() << "\n";
    out << "# norm_mean " << format_double(norm_mean) << " norm_std "
        << format_double(norm_std) << "\n";
    for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
        const RatingMatrix& block = blocks[bi];
        out << "# task " << bi << " rows " << block.rows() << " cols " << block.cols()
            << " entries " << block.observed_count() << "\n";
        out << "# row_ids";
        for (auto id : block.row_ids) out << " " << id;
        out << "\n# col_ids";
        for (auto id : block.col_ids) out << " " << id;
        out << "\n";
        for (std::size_t r = 0; r < block.rows(); ++r) {
            for (std::size_t c = 0; c < block.cols(); ++c) {
                if (block.mask.at2(r, c) == 0.0) continue;
                out << r << "\t" << c << "\t" << format_double(block.values.at2(r, c))
                    << "\n";
            }
        }
    }
    require(out.good(), ErrorCode::io, "write failed for " + path);
}

std::vector<RatingMatrix> load_taskset(const std::string& path, double* norm_mean,
                                       double* norm_std) {
    std::ifstream in(path);
    require(in.good(), ErrorCode::io, "cannot open " + path);
    std::string line;
    std::size_t lineno = 0;

    auto next_line = [&](std::string* out) {
        while (std::getline(in, line)) {
            ++lineno;
            *out = strip(line);
            if (!out->empty()) return true;
        }
        return false;
    };

    std::string cur;
    if (!next_line(&cur) || cur != "# taskset v1") parse_fail(path, lineno, "bad header");
    if (!next_line(&cur)) parse_fail(path, lineno, "missing task count");
    std::int64_t ntasks = 0;
    {
        auto f = split_on(cur, " ");
        if (f.size() != 3 || f[0] != "#" || f[1] != "tasks" || !parse_i64(f[2], &ntasks) ||
            ntasks < 0) {
            parse_fail(path, lineno, "bad task count line: " + cur);
        }
    }
    if (!next_line(&cur)) parse_fail(path, lineno, "missing normalization header");
    {
        auto f = split_on(cur, " ");
        bool ok = f.size() == 5 && f[0] == "#" && f[1] == "norm_mean" && f[3] == "norm_std" &&
                  parse_f64(f[2], norm_mean) && parse_f64(f[4], norm_std);
        if (!ok) parse_fail(path, lineno, "bad normalization line: " + cur);
        check_norm_header(true, true, path, lineno);
    }

    std::vector<RatingMatrix> blocks;
    for (std::int64_t ti = 0; ti < ntasks; ++ti) {
        if (!next_line(&cur)) parse_fail(path, lineno, "missing task header");
        std::int64_t idx = 0, rows = 0, cols = 0, entries = 0;
        {
            auto f = split_on(cur, " ");
            bool ok = f.size() == 9 && f[0] == "#" && f[1] == "task" &&
                      parse_i64(f[2], &idx) && f[3] == "rows" && parse_i64(f[4], &rows) &&
                      f[5] == "cols" && parse_i64(f[6], &cols) && f[7] == "entries" &&
                      parse_i64(f[8], &entries);
            if (!ok || idx != ti || rows <= 0 || cols <= 0 || entries < 0) {
                parse_fail(path, lineno, "bad task header: " + cur);
            }
        }
        RatingMatrix block;
        block.values = Tensor({static_cast<std::size_t>(rows), static_cast<std::size_t>(cols)});
        block.mask = Tensor({static_cast<std::size_t>(rows), static_cast<std::size_t>(cols)});
        if (!next_line(&cur)) parse_fail(path, lineno, "missing row_ids");
        {
            auto f = split_on(cur, " ");
            if (f.size() != 2 + static_cast<std::size_t>(rows) || f[0] != "#" ||
                f[1] != "row_ids") {
                parse_fail(path, lineno, "bad row_ids line");
            }
            for (std::int64_t i = 0; i < rows; ++i) {
                std::int64_t id;
                if (!parse_i64(f[2 + i], &id)) parse_fail(path, lineno, "bad row id");
                block.row_ids.push_back(id);
            }
        }
        if (!next_line(&cur)) parse_fail(path, lineno, "missing col_ids");
        {
            auto f = split_on(cur, " ");
            if (f.size() != 2 + static_cast<std::size_t>(cols) || f[0] != "#" ||
                f[1] != "col_ids") {
                parse_fail(path, lineno, "bad col_ids line");
            }
            for (std::int64_t i = 0; i < cols; ++i) {
                std::int64_t id;
                if (!parse_i64(f[2 + i], &id)) parse_fail(path, lineno, "bad col id");
                block.col_ids.push_back(id);
            }
        }
        for (std::int64_t e = 0; e < entries; ++e) {
            if (!next_line(&cur)) parse_fail(path, lineno, "unexpected end of entries");
            auto f = split_on(cur, "\t");
            std::int64_t r = 0, c = 0;
            double v = 0.0;
            bool ok = f.size() == 3 && parse_i64(f[0], &r) && parse_i64(f[1], &c) &&
                      parse_f64(f[2], &v) && r >= 0 && r < rows && c >= 0 && c < cols;
            if (!ok) parse_fail(path, lineno, "bad entry line: " + cur);
            block.values.at2(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = v;
            block.mask.at2(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = 1.0;
        }
        blocks.push_back(std::move(block));
    }
    std::string extra;
    if (next_line(&extra)) parse_fail(path, lineno, "trailing content: " + extra);
    return blocks;
}

void save_manifest(const std::string& path, const std::vector<Episode>& suite,
                   double norm_mean, double norm_std) {
    std::ofstream out(path);
    require(out.good(), ErrorCode::io, "cannot write " + path);
    out << "# manifest v1\n";
    out << "# episodes " << suite.size() << "\n";
    out << "# norm_mean " << format_double(norm_mean) << " norm_std "
        << format_double(norm_std) << "\n";
    for (std::size_t ei = 0; ei < suite.size(); ++ei) {
        const Episode& ep = suite[ei];
        std::size_t entries = 0;
        for (std::size_t i = 0; i < ep.b.numel(); ++i) {
            entries += (ep.b[i] != 0.0 || ep.bp[i] != 0.0) ? 1 : 0;
        }
        out << "# episode " << ei << " rows " << ep.x.dim(0) << " cols " << ep.x.dim(1)
            << " entries " << entries << "\n";
        for (std::size_t r = 0; r < ep.x.dim(0); ++r) {
            for (std::size_t c = 0; c < ep.x.dim(1); ++c) {
                if (ep.b.at2(r, c) != 0.0) {
                    out << r << "\t" << c << "\t" << format_double(ep.x.at2(r, c))
                        << "\ttrain\n";
                } else if (ep.bp.at2(r, c) != 0.0) {
                    out << r << "\t" << c << "\t" << format_double(ep.xp.at2(r, c))
                        << "\ttest\n";
                }
            }
        }
    }
    require(out.good(), ErrorCode::io, "write failed for " + path);
}

std::vector<Episode> load_manifest(const std::string& path, double* norm_mean,
                                   double* norm_std) {
    std::ifstream in(path);
    require(in.good(), ErrorCode::io, "cannot open " + path);
    std::string line;
    std::size_t lineno = 0;
    auto next_line = [&](std::string* out) {
        while (std::getline(in, line)) {
            ++lineno;
            *out = strip(line);
            if (!out->empty()) return true;
        }
        return false;
    };

    std::string cur;
    if (!next_line(&cur) || cur != "# manifest v1") parse_fail(path, lineno, "bad header");
    if (!next_line(&cur)) parse_fail(path, lineno, "missing episode count");
    std::int64_t count = 0;
    {
        auto f = split_on(cur, " ");
        if (f.size() != 3 || f[0] != "#" || f[1] != "episodes" || !parse_i64(f[2], &count) ||
            count < 0) {
            parse_fail(path, lineno, "bad episode count line: " + cur);
        }
    }
    if (!next_line(&cur)) parse_fail(path, lineno, "missing normalization header");
    {
        auto f = split_on(cur, " ");
        bool ok = f.size() == 5 && f[0] == "#" && f[1] == "norm_mean" && f[3] == "norm_std" &&
                  parse_f64(f[2], norm_mean) && parse_f64(f[4], norm_std);
        if (!ok) parse_fail(path, lineno, "bad normalization line: " + cur);
    }

    std::vector<Episode> suite;
    for (std::int64_t ei = 0; ei < count; ++ei) {
        if (!next_line(&cur)) parse_fail(path, lineno, "missing episode header");
        std::int64_t idx = 0, rows = 0, cols = 0, entries = 0;
        {
            auto f = split_on(cur, " ");
            bool ok = f.size() == 9 && f[0] == "#" && f[1] == "episode" &&
                      parse_i64(f[2], &idx) && f[3] == "rows" && parse_i64(f[4], &rows) &&
                      f[5] == "cols" && parse_i64(f[6], &cols) && f[7] == "entries" &&
                      parse_i64(f[8], &entries);
            if (!ok || idx != ei || rows <= 0 || cols <= 0 || entries < 0) {
                parse_fail(path, lineno, "bad episode header: " + cur);
            }
        }
        Episode ep;
        const auto R = static_cast<std::size_t>(rows), C = static_cast<std::size_t>(cols);
        ep.x = Tensor({R, C});
        ep.b = Tensor({R, C});
        ep.xp = Tensor({R, C});
        ep.bp = Tensor({R, C});
        for (std::int64_t e = 0; e < entries; ++e) {
            if (!next_line(&cur)) parse_fail(path, lineno, "unexpected end of entries");
            auto f = split_on(cur, "\t");
            std::int64_t r = 0, c = 0;
            double v = 0.0;
            bool ok = f.size() == 4 && parse_i64(f[0], &r) && parse_i64(f[1], &c) &&
                      parse_f64(f[2], &v) && r >= 0 && r < rows && c >= 0 && c < cols &&
                      (f[3] == "train" || f[3] == "test");
            if (!ok) parse_fail(path, lineno, "bad entry line: " + cur);
            if (f[3] == "train") {
                ep.x.at2(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = v;
                ep.b.at2(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = 1.0;
            } else {
                ep.xp.at2(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = v;
                ep.bp.at2(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = 1.0;
            }
        }
        suite.push_back(std::move(ep));
    }
    std::string extra;
    if (next_line(&extra)) parse_fail(path, lineno, "trailing content: " + extra);
    return suite;
}

}  // namespace mmf
