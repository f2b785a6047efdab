#pragma once

#include <string>
#include <vector>

#include "spheremap/embedding.hpp"
#include "spheremap/mapping.hpp"
#include "spheremap/sim.hpp"
#include "spheremap/types.hpp"

// File formats. All text formats are TAB-separated, dot-decimal, and
// locale-independent; floats round-trip exactly (shortest representation that
// parses back to the same double).

namespace spheremap::io {

/// Text matrix file: header line "#<rows>\t<cols>", then one row per line of
/// TAB-separated decimals.
void write_matrix(const std::string& path, const Matrix& m);

/// Binary matrix file: little-endian uint64 rows, uint64 cols, then
/// rows*cols float64 values in row-major order.
void write_matrix_binary(const std::string& path, const Matrix& m);

/// Reads either format, sniffing the leading '#' of the text header.
Matrix read_matrix(const std::string& path);

/// Group file: one "row_id\tgroup_id" line per row, rows in order and groups
/// contiguous.
void write_groups(const std::string& path, const GroupPartition& partition);
GroupPartition read_groups(const std::string& path);

/// Mapping file: header "#mapping\t<n>", then one "i\tj\tvalue" line per
/// nonzero entry. A single in-block entry of exactly 1 reads back as an
/// indicator row; rows with no entries are unmapped.
void write_mapping(const std::string& path, const BlockMappingMatrix& pi);
BlockMappingMatrix read_mapping(const std::string& path, const GroupPartition& partition);

void write_sweep_tsv(const std::string& path, const sim::SweepTable& table);
void write_sweep_json(const std::string& path, const sim::SweepTable& table);

/// Co-occurrence triplets: "item_i\titem_j\tcount" per line, UTF-8 ids.
/// Vocabulary is assembled in first-appearance order unless a manifest of one
/// id per line is supplied.
embedding::CooccurrenceTable read_cooccurrence(const std::string& path,
                                               const std::string& vocab_path = "");

std::string format_double(double v);
double parse_double(const std::string& s, const std::string& context);

}  // namespace spheremap::io
