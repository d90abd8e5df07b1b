#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "xbarsim/crossbar.hpp"
#include "xbarsim/nn.hpp"

namespace xbarsim {

// Plain-text records. Every record opens with a magic line and the provenance
// of the run that wrote it:
//
//   xbarsim-weights 1            (or xbarsim-crossbar 1)
//   config_digest <16 hex digits>
//   seed <unsigned>
//
// weights.state then has
//   layers <L>
//   layer <l> <rows> <cols> <activation>
//   <rows lines of cols numbers>
//
// crossbar.state then has
//   arrays <L>
//   array <l> <variant> <rows> <cols> <minus_cols>
//   window <g_off> <g_on>
//   scaling <k_V> <k_G>
//   range <w_max_abs> <w_min> <w_max> <power>
//   g_plus / g_minus / stuck_plus / stuck_minus, each followed by a matrix
//   (stuck matrices hold 0/1; a stuck cell's value is its conductance).
//
// Numbers use the shortest representation that round-trips exactly.
struct RecordHeader {
  std::string config_digest;
  std::uint64_t seed = 0;
  bool operator==(const RecordHeader&) const = default;
};

std::string format_double(double value);

void write_weights(std::ostream& out, const Mlp& net, const RecordHeader& header);

struct WeightsRecord {
  RecordHeader header;
  Mlp net;
};
WeightsRecord read_weights(std::istream& in);

void write_crossbars(std::ostream& out, std::span<const Crossbar> arrays,
                     const RecordHeader& header);

struct CrossbarRecord {
  RecordHeader header;
  std::vector<MappingScheme> schemes;
  std::vector<CrossbarSnapshot> arrays;
};
CrossbarRecord read_crossbars(std::istream& in);

// Rebuilds arrays from a record; base supplies device, nonidealities and wires,
// the record supplies each array's scheme and conductances.
std::vector<Crossbar> restore_crossbars(const CrossbarRecord& record, const CrossbarConfig& base,
                                        const RandomStream& lineage);

}  // namespace xbarsim
