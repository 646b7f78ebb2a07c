#pragma once

#include <string>
#include <vector>

#include "manyiv/dataset.hpp"

namespace manyiv {

// Column assignment for a CSV extract. Instrument and control entries
// are column names; a trailing '*' matches every column with that
// prefix, expanded in header order. Columns listed in expand are
// treated as categorical controls and dummy-coded with the first level
// (in sorted order) left out as the reference.
struct ColumnRoles {
  std::string outcome;
  std::string endogenous;
  std::vector<std::string> instruments;
  std::vector<std::string> controls;
  std::vector<std::string> expand;
};

struct IngestReport {
  int rows_total = 0;
  int rows_kept = 0;
  int rows_dropped = 0;
  std::vector<std::string> instrument_names;  // post-pruning
  std::vector<std::string> control_names;     // post-pruning
  std::vector<std::string> notes;
};

// Reads the file, drops rows with missing cells in any used column
// (empty, NA, N/A, NaN, or a bare period), and fails when fewer than
// 90 percent of the data rows survive. Non-numeric text in a numeric
// column is an error naming the row and column.
Dataset ingest_csv(const std::string& path, const ColumnRoles& roles,
                   IngestReport* report = nullptr);

// Same, from an already-loaded stream (used by tests).
Dataset ingest_csv_text(const std::string& text, const ColumnRoles& roles,
                        IngestReport* report = nullptr);

}  // namespace manyiv
