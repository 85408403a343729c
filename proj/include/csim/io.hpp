#pragma once

#include <filesystem>
#include <string>

#include "csim/batchopt.hpp"
#include "csim/cliques.hpp"
#include "csim/trainer.hpp"
#include "csim/types.hpp"

namespace csim {

// Descriptor CSV: header `id,video_id,frame_index,f0,...,f{D-1}`. The two
// sequence columns are either filled on every row or empty on every row.
ExemplarSet load_descriptors_csv(const std::filesystem::path& path);
void save_descriptors_csv(const std::filesystem::path& path,
                          const ExemplarSet& set);

// Binary container: magic "CSIM", u32 version, u64 rows, u64 cols, u8
// sequence flag, row-major little-endian f64 payload, then rows * (u32
// video_id, u32 frame_index) when the flag is set. Ids are not stored; rows
// load back with their decimal index as id.
ExemplarSet load_descriptors_binary(const std::filesystem::path& path);
void save_descriptors_binary(const std::filesystem::path& path,
                             const ExemplarSet& set);

ExemplarSet load_descriptors(const std::filesystem::path& path);

// Square or rectangular matrices in the same binary container with the
// sequence flag cleared.
Eigen::MatrixXd load_matrix(const std::filesystem::path& path);
void save_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& m);

GroundTruth load_ground_truth(const std::filesystem::path& path);
void save_ground_truth(const std::filesystem::path& path,
                       const GroundTruth& gt);

// Clique CSV: header `clique_id,sample_id`, rows sorted by clique then
// member. n_samples cannot be recovered from the file and must be supplied.
CliqueAssignment load_cliques_csv(const std::filesystem::path& path,
                                  int n_samples);
void save_cliques_csv(const std::filesystem::path& path,
                      const CliqueAssignment& cl);

// Model checkpoint: magic "CMDL", u32 version, u32 D/H/E/K, parameter blocks
// W1, b1, W2, b2, W3, b3 as little-endian f64.
EmbeddingModel load_model(const std::filesystem::path& path);
void save_model(const std::filesystem::path& path, const EmbeddingModel& m);

SolveReport load_solve_report(const std::filesystem::path& path);
void save_solve_report(const std::filesystem::path& path,
                       const SolveReport& report);

// Loss curve CSV: header `iteration,loss`.
TrainReport load_train_report(const std::filesystem::path& path);
void save_train_report(const std::filesystem::path& path,
                       const TrainReport& report);

}  // namespace csim
