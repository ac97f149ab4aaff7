#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mmf/rng.hpp"
#include "mmf/tensor.hpp"

namespace mmf {

// Dense rating block with an observation mask. Missing cells hold 0 in
// values; the id vectors remember which original entities the rows and
// columns came from.
struct RatingMatrix {
    Tensor values;
    Tensor mask;
    std::vector<std::int64_t> row_ids;
    std::vector<std::int64_t> col_ids;

    std::size_t rows() const { return values.dim(0); }
    std::size_t cols() const { return values.dim(1); }
    std::size_t observed_count() const;
};

// Entity-disjoint train/validation/test blocks plus the z-score statistics
// fitted on the training block's observed ratings.
struct DatasetSplit {
    RatingMatrix train_block;
    RatingMatrix valid_block;
    RatingMatrix test_block;
    double norm_mean = 0.0;
    double norm_std = 1.0;
};

// One sampled task: adaptation part (x, b) and held-out part (xp, bp) over
// the same submatrix, with disjoint masks.
struct Episode {
    Tensor x;
    Tensor b;
    Tensor xp;
    Tensor bp;
};

// General training input: one block per task matrix. A classic single-matrix
// split becomes a dataset with one block per role.
struct MetaDataset {
    std::vector<RatingMatrix> train_blocks;
    std::vector<RatingMatrix> valid_blocks;
    std::vector<RatingMatrix> test_blocks;
    double norm_mean = 0.0;
    double norm_std = 1.0;
};

enum class TripletFormat { movielens_tab, movielens_dcolon, csv };

struct Triplet {
    std::int64_t user = 0;
    std::int64_t item = 0;
    double rating = 0.0;
};

TripletFormat triplet_format_from_name(const std::string& name);
const char* triplet_format_name(TripletFormat format);

std::vector<Triplet> load_triplets(const std::string& path, TripletFormat format);

DatasetSplit partition_and_normalize(const std::vector<Triplet>& triplets,
                                     const std::array<double, 3>& fractions,
                                     std::uint64_t seed);

MetaDataset dataset_from_split(const DatasetSplit& split);

double normalize_value(double v, double mean, double std);
double denormalize_value(double v, double mean, double std);

// Draws an n x m submatrix and routes each observed cell to the adaptation
// mask with probability ratio, to the held-out mask otherwise. Retries a
// bounded number of times until both sides are nonempty.
Episode sample_episode(const RatingMatrix& block, std::size_t n, std::size_t m, double ratio,
                       RngStream& rng);

// Fixed evaluation suite: episodes drawn round-robin over the given blocks
// with (1 - holdout) of the observed entries kept for adaptation.
std::vector<Episode> make_meta_test_suite(const std::vector<RatingMatrix>& blocks,
                                          std::size_t count, std::size_t n, std::size_t m,
                                          double holdout, RngStream& rng);

// Task collections and episode suites serialize to tab-separated text with
// '#' header lines carrying dimensions and normalization statistics; floats
// use 17 significant digits so a round trip is bit-exact.
void save_taskset(const std::string& path, const std::vector<RatingMatrix>& blocks,
                  double norm_mean, double norm_std);
std::vector<RatingMatrix> load_taskset(const std::string& path, double* norm_mean,
                                       double* norm_std);

void save_manifest(const std::string& path, const std::vector<Episode>& suite,
                   double norm_mean, double norm_std);
std::vector<Episode> load_manifest(const std::string& path, double* norm_mean,
                                   double* norm_std);

}  // namespace mmf
