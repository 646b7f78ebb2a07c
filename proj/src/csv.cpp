#include "manyiv/csv.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "manyiv/errors.hpp"

namespace manyiv {
namespace {

// Minimal CSV reader: quoted fields, doubled quotes inside quotes,
// embedded separators and newlines inside quotes, optional \r\n.
std::vector<std::vector<std::string>> read_table(std::istream& in) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool any = false;
  int c;
  while ((c = in.get()) != EOF) {
    const char ch = static_cast<char>(c);
    if (quoted) {
      if (ch == '"') {
        if (in.peek() == '"') {
          field += '"';
          in.get();
        } else {
          quoted = false;
        }
      } else {
        field += ch;
      }
      continue;
    }
    switch (ch) {
      case '"':
        quoted = true;
        any = true;
        break;
      case ',':
        row.push_back(std::move(field));
        field.clear();
        any = true;
        break;
      case '\r':
        break;
      case '\n':
        if (any || !field.empty() || !row.empty()) {
          row.push_back(std::move(field));
          field.clear();
          rows.push_back(std::move(row));
          row.clear();
          any = false;
        }
        break;
      default:
        field += ch;
        any = true;
    }
  }
  if (quoted) throw InvalidInput("unterminated quote in CSV input");
  if (any || !field.empty() || !row.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string trimmed(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

bool is_missing(const std::string& cell) {
  const std::string t = trimmed(cell);
  return t.empty() || t == "NA" || t == "na" || t == "N/A" || t == "NaN" ||
         t == "nan" || t == ".";
}

// Resolves one role entry against the header; '*' suffix is a prefix
// pattern expanded in header order.
std::vector<int> resolve(const std::string& entry,
                         const std::vector<std::string>& header,
                         const char* role) {
  std::vector<int> out;
  if (!entry.empty() && entry.back() == '*') {
    const std::string prefix = entry.substr(0, entry.size() - 1);
    for (std::size_t j = 0; j < header.size(); ++j)
      if (header[j].rfind(prefix, 0) == 0) out.push_back(static_cast<int>(j));
    if (out.empty())
      throw InvalidInput(std::string("no ") + role +
                         " column matches pattern '" + entry + "'");
    return out;
  }
  for (std::size_t j = 0; j < header.size(); ++j)
    if (header[j] == entry) {
      out.push_back(static_cast<int>(j));
      return out;
    }
  throw InvalidInput(std::string(role) + " column '" + entry +
                     "' not found in the header");
}

double parse_cell(const std::string& cell, int row, const std::string& col) {
  const std::string t = trimmed(cell);
  const char* s = t.c_str();
  char* end = nullptr;
  const double v = std::strtod(s, &end);
  if (end == s || *end != '\0')
    throw InvalidInput("row " + std::to_string(row) + ", column '" + col +
                       "': cannot parse '" + t + "' as a number");
  return v;
}

Dataset ingest_rows(const std::vector<std::vector<std::string>>& table,
                    const ColumnRoles& roles, IngestReport* report) {
  if (table.empty()) throw InvalidInput("CSV input is empty");
  const std::vector<std::string>& header = table[0];
  if (roles.outcome.empty() || roles.endogenous.empty())
    throw InvalidInput("outcome and endogenous columns are required");

  const int yc = resolve(roles.outcome, header, "outcome")[0];
  const int xc = resolve(roles.endogenous, header, "endogenous")[0];
  std::vector<int> zc, wc, ec;
  for (const std::string& e : roles.instruments)
    for (int j : resolve(e, header, "instrument")) zc.push_back(j);
  for (const std::string& e : roles.controls)
    for (int j : resolve(e, header, "control")) wc.push_back(j);
  for (const std::string& e : roles.expand)
    for (int j : resolve(e, header, "expand")) ec.push_back(j);
  if (zc.empty()) throw InvalidInput("at least one instrument column is required");

  std::set<int> seen{yc, xc};
  auto claim = [&](int j) {
    if (!seen.insert(j).second)
      throw InvalidInput("column '" + header[j] +
                         "' is assigned to more than one role");
  };
  if (yc == xc)
    throw InvalidInput("outcome and endogenous columns must differ");
  for (int j : zc) claim(j);
  for (int j : wc) claim(j);
  for (int j : ec) claim(j);

  // Pass 1: keep rows with no missing cell among used columns.
  std::vector<int> used{yc, xc};
  used.insert(used.end(), zc.begin(), zc.end());
  used.insert(used.end(), wc.begin(), wc.end());
  used.insert(used.end(), ec.begin(), ec.end());
  const int ncols = static_cast<int>(header.size());

  std::vector<int> kept;
  const int total = static_cast<int>(table.size()) - 1;
  for (int r = 1; r <= total; ++r) {
    const std::vector<std::string>& row = table[r];
    if (static_cast<int>(row.size()) != ncols)
      throw InvalidInput("row " + std::to_string(r) + " has " +
                         std::to_string(row.size()) + " fields, expected " +
                         std::to_string(ncols));
    bool ok = true;
    for (int j : used)
      if (is_missing(row[j])) {
        ok = false;
        break;
      }
    if (ok) kept.push_back(r);
  }
  const int n = static_cast<int>(kept.size());
  if (total <= 0) throw InvalidInput("CSV input has a header but no data rows");
  if (n < (total * 9 + 9) / 10)
    throw InvalidInput("too many incomplete rows: kept " + std::to_string(n) +
                       " of " + std::to_string(total) +
                       " (at least 90 percent must survive)");

  // Categorical levels over the kept rows.
  struct Expanded {
    std::string column;
    std::vector<std::string> levels;  // sorted; front() is the reference
  };
  std::vector<Expanded> cats;
  for (int j : ec) {
    std::set<std::string> levels;
    for (int r : kept) levels.insert(trimmed(table[r][j]));
    if (levels.size() < 2)
      throw InvalidInput("expand column '" + header[j] +
                         "' has fewer than two levels");
    cats.push_back({header[j], {levels.begin(), levels.end()}});
  }

  Eigen::VectorXd y(n), x(n);
  Eigen::MatrixXd z(n, static_cast<int>(zc.size()));
  int wcols = static_cast<int>(wc.size());
  for (const Expanded& c : cats)
    wcols += static_cast<int>(c.levels.size()) - 1;
  Eigen::MatrixXd w(n, wcols);

  std::vector<std::string> znames, wnames;
  for (int j : zc) znames.push_back(header[j]);
  for (int j : wc) wnames.push_back(header[j]);
  for (const Expanded& c : cats)
    for (std::size_t l = 1; l < c.levels.size(); ++l)
      wnames.push_back(c.column + "=" + c.levels[l]);

  for (int i = 0; i < n; ++i) {
    const std::vector<std::string>& row = table[kept[i]];
    y[i] = parse_cell(row[yc], kept[i], header[yc]);
    x[i] = parse_cell(row[xc], kept[i], header[xc]);
    for (std::size_t j = 0; j < zc.size(); ++j)
      z(i, static_cast<int>(j)) =
          parse_cell(row[zc[j]], kept[i], header[zc[j]]);
    int col = 0;
    for (std::size_t j = 0; j < wc.size(); ++j)
      w(i, col++) = parse_cell(row[wc[j]], kept[i], header[wc[j]]);
    for (std::size_t cj = 0; cj < cats.size(); ++cj) {
      const std::string v = trimmed(row[ec[cj]]);
      for (std::size_t l = 1; l < cats[cj].levels.size(); ++l)
        w(i, col++) = v == cats[cj].levels[l] ? 1.0 : 0.0;
    }
  }

  Dataset ds = Dataset::make(std::move(y), std::move(x), std::move(z),
                             std::move(w));

  if (report) {
    report->rows_total = total;
    report->rows_kept = n;
    report->rows_dropped = total - n;
    for (int j : ds.z_retained()) report->instrument_names.push_back(znames[j]);
    for (int j : ds.w_retained()) report->control_names.push_back(wnames[j]);
    if (report->rows_dropped > 0)
      report->notes.push_back("dropped " +
                              std::to_string(report->rows_dropped) + " of " +
                              std::to_string(total) +
                              " rows with missing cells");
    for (const Expanded& c : cats)
      report->notes.push_back("expanded '" + c.column + "' into " +
                              std::to_string(c.levels.size() - 1) +
                              " dummies (reference level '" + c.levels[0] +
                              "')");
    if (ds.z_pruned())
      report->notes.push_back(
          "dropped " +
          std::to_string(znames.size() - ds.z_retained().size()) +
          " collinear instrument columns");
    if (ds.w_pruned())
      report->notes.push_back(
          "dropped " +
          std::to_string(wnames.size() - ds.w_retained().size()) +
          " collinear control columns");
  }
  return ds;
}

}  // namespace

Dataset ingest_csv(const std::string& path, const ColumnRoles& roles,
                   IngestReport* report) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open '" + path + "'");
  return ingest_rows(read_table(in), roles, report);
}

Dataset ingest_csv_text(const std::string& text, const ColumnRoles& roles,
                        IngestReport* report) {
  std::istringstream in(text);
  return ingest_rows(read_table(in), roles, report);
}

}  // namespace manyiv
