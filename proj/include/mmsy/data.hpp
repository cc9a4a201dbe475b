// Dataset ingestion and archival: species catalog, observed series, price
// history, fishing history, scenario batches and simulator output files.
// All on-disk schemas are documented in the README; numbers are written with
// shortest round-trip formatting so save/load is exact.
#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mmsy/csv.hpp"
#include "mmsy/errors.hpp"
#include "mmsy/types.hpp"

namespace mmsy::data {

// --------------------------------------------------------------------------
// Catalog: header `index,species,b_lim_tonnes,price_per_tonne,ss_fmsy`.

inline SpeciesCatalog load_catalog(const std::string& path) {
  const csv::Table t = csv::read_file(path);
  t.require_columns({"index", "species", "b_lim_tonnes", "price_per_tonne",
                     "ss_fmsy"});
  const int ci = t.column("index"), cs = t.column("species"),
            cb = t.column("b_lim_tonnes"), cp = t.column("price_per_tonne"),
            cf = t.column("ss_fmsy");
  SpeciesCatalog catalog;
  for (const auto& row : t.rows) {
    SpeciesInfo info;
    info.index = static_cast<int>(t.integer(row, ci));
    info.name = t.field(row, cs);
    info.b_lim_tonnes = t.number(row, cb);
    info.price_per_tonne = t.number(row, cp);
    if (const std::string& f = t.field(row, cf); f != "NA")
      info.ss_fmsy = t.number(row, cf);
    catalog.entries.push_back(std::move(info));
  }
  catalog.validate();
  return catalog;
}

inline void save_catalog(const std::string& path, const SpeciesCatalog& catalog) {
  csv::Writer w(path);
  w.header({"index", "species", "b_lim_tonnes", "price_per_tonne", "ss_fmsy"});
  for (const auto& e : catalog.entries) {
    auto row = w.row();
    row.integer(e.index).text(e.name).num(e.b_lim_tonnes).num(e.price_per_tonne);
    if (e.ss_fmsy)
      row.num(*e.ss_fmsy);
    else
      row.text("NA");
  }
}

namespace detail {

inline int species_row(const csv::Table& t, const csv::Row& row, int col,
                       const SpeciesCatalog& catalog) {
  const std::string& name = t.field(row, col);
  const int id = catalog.index_of(name);
  if (id < 0)
    throw ParseError(t.path + ":" + std::to_string(row.line) +
                     ": unknown species '" + name + "'");
  return id;
}

}  // namespace detail

// --------------------------------------------------------------------------
// Observations: header `year,species,tonnes`, natural tonnes on disk and log
// tonnes in memory. Missing species-years simply have no row.

inline SpeciesSeries load_observations(const std::string& path, OutputKind kind,
                                       const SpeciesCatalog& catalog,
                                       YearRange years = {1984, 2017}) {
  const csv::Table t = csv::read_file(path);
  t.require_columns({"year", "species", "tonnes"});
  const int cy = t.column("year"), cs = t.column("species"),
            ct = t.column("tonnes");

  std::vector<int> all(kNumSpecies);
  for (int i = 0; i < kNumSpecies; ++i) all[static_cast<size_t>(i)] = i;
  SpeciesSeries series = SpeciesSeries::empty(kind, years, all);

  for (const auto& row : t.rows) {
    const int year = static_cast<int>(t.integer(row, cy));
    if (!years.contains(year))
      throw ParseError(path + ":" + std::to_string(row.line) + ": year " +
                       std::to_string(year) + " outside " +
                       std::to_string(years.first) + "-" +
                       std::to_string(years.last));
    const int id = detail::species_row(t, row, cs, catalog);
    const double tonnes = t.number(row, ct);
    if (!(tonnes > 0.0))
      throw ParseError(path + ":" + std::to_string(row.line) +
                       ": tonnage must be positive, got " +
                       csv::format_number(tonnes));
    series.set(id, year, std::log(tonnes));
  }
  series.validate();
  return series;
}

// --------------------------------------------------------------------------
// Series archive: header `year,species,log_tonnes`, one row per present cell.
// Values are already in log space; round-trips exactly.

inline void save_series(const std::string& path, const SpeciesSeries& series,
                        const SpeciesCatalog& catalog) {
  csv::Writer w(path);
  w.header({"year", "species", "log_tonnes"});
  for (int r = 0; r < series.rows(); ++r)
    for (int c = 0; c < series.years.size(); ++c)
      if (series.present(r, c))
        w.row()
            .integer(series.years.first + c)
            .text(catalog.at(series.species[static_cast<size_t>(r)]).name)
            .num(series.log_values(r, c));
}

inline SpeciesSeries load_series(const std::string& path, OutputKind kind,
                                 const SpeciesCatalog& catalog,
                                 YearRange years,
                                 std::vector<int> species_rows) {
  const csv::Table t = csv::read_file(path);
  t.require_columns({"year", "species", "log_tonnes"});
  const int cy = t.column("year"), cs = t.column("species"),
            cv = t.column("log_tonnes");
  SpeciesSeries series =
      SpeciesSeries::empty(kind, years, std::move(species_rows));
  std::map<int, int> row_of;
  for (int r = 0; r < series.rows(); ++r)
    row_of[series.species[static_cast<size_t>(r)]] = r;
  for (const auto& row : t.rows) {
    const int year = static_cast<int>(t.integer(row, cy));
    const int id = detail::species_row(t, row, cs, catalog);
    auto it = row_of.find(id);
    if (it == row_of.end() || !years.contains(year))
      throw ParseError(path + ":" + std::to_string(row.line) +
                       ": cell outside the requested series layout");
    series.log_values(it->second, years.offset(year)) = t.number(row, cv);
    series.present(it->second, years.offset(year)) = true;
  }
  series.validate();
  return series;
}

// --------------------------------------------------------------------------
// Prices: header `year,species,price_per_tonne`. Stored as a per-species
// annual table over a common year range; every cell must be present.

struct PriceTable {
  YearRange years;
  Matrix values;  // kNumSpecies x years.size()

  double at(int species, int year) const {
    return values(species, years.offset(year));
  }
};

inline PriceTable load_prices(const std::string& path,
                              const SpeciesCatalog& catalog) {
  const csv::Table t = csv::read_file(path);
  t.require_columns({"year", "species", "price_per_tonne"});
  const int cy = t.column("year"), cs = t.column("species"),
            cp = t.column("price_per_tonne");
  int lo = 0, hi = 0;
  bool seen = false;
  for (const auto& row : t.rows) {
    const int year = static_cast<int>(t.integer(row, cy));
    lo = seen ? std::min(lo, year) : year;
    hi = seen ? std::max(hi, year) : year;
    seen = true;
  }
  if (!seen) throw ParseError(path + ": no price rows");

  PriceTable table;
  table.years = {lo, hi};
  table.values = Matrix::Constant(kNumSpecies, table.years.size(), -1.0);
  for (const auto& row : t.rows) {
    const int year = static_cast<int>(t.integer(row, cy));
    const int id = detail::species_row(t, row, cs, catalog);
    const double price = t.number(row, cp);
    if (!(price >= 0.0))
      throw ParseError(path + ":" + std::to_string(row.line) +
                       ": negative price");
    table.values(id, table.years.offset(year)) = price;
  }
  if ((table.values.array() < 0.0).any())
    throw ParseError(path + ": price table has missing species-year cells");
  return table;
}

inline void save_prices(const std::string& path, const PriceTable& table,
                        const SpeciesCatalog& catalog) {
  csv::Writer w(path);
  w.header({"year", "species", "price_per_tonne"});
  for (int c = 0; c < table.years.size(); ++c)
    for (int s = 0; s < kNumSpecies; ++s)
      w.row()
          .integer(table.years.first + c)
          .text(catalog.at(s).name)
          .num(table.values(s, c));
}

// --------------------------------------------------------------------------
// Fishing history: header `year,F1,...,F9`, one row per year, full community.

inline FishingHistory load_fhistory(const std::string& path) {
  const csv::Table t = csv::read_file(path);
  std::vector<std::string> cols{"year"};
  for (int i = 1; i <= kNumSpecies; ++i) cols.push_back("F" + std::to_string(i));
  t.require_columns(cols);
  const int cy = t.column("year");
  int lo = 0, hi = 0;
  bool seen = false;
  for (const auto& row : t.rows) {
    const int year = static_cast<int>(t.integer(row, cy));
    lo = seen ? std::min(lo, year) : year;
    hi = seen ? std::max(hi, year) : year;
    seen = true;
  }
  if (!seen) throw ParseError(path + ": no history rows");

  FishingHistory history;
  history.years = {lo, hi};
  history.f = Matrix::Constant(kNumSpecies, history.years.size(), -1.0);
  for (const auto& row : t.rows) {
    const int year = static_cast<int>(t.integer(row, cy));
    for (int i = 0; i < kNumSpecies; ++i)
      history.f(i, history.years.offset(year)) =
          t.number(row, t.column("F" + std::to_string(i + 1)));
  }
  if ((history.f.array() < 0.0).any())
    throw ParseError(path + ": history has missing or negative F cells");
  history.validate();
  return history;
}

inline void save_fhistory(const std::string& path,
                          const FishingHistory& history) {
  csv::Writer w(path);
  std::vector<std::string> cols{"year"};
  for (int i = 1; i <= kNumSpecies; ++i) cols.push_back("F" + std::to_string(i));
  w.header(cols);
  for (int c = 0; c < history.years.size(); ++c) {
    auto row = w.row();
    row.integer(history.years.first + c);
    for (int i = 0; i < kNumSpecies; ++i) row.num(history.f(i, c));
  }
}

// --------------------------------------------------------------------------
// Scenario batches: header `scenario_id,F1,...,F9`.

struct ScenarioBatch {
  std::vector<std::string> ids;
  std::vector<FishingScenario> scenarios;

  int size() const { return static_cast<int>(scenarios.size()); }
};

inline ScenarioBatch load_scenarios(const std::string& path) {
  const csv::Table t = csv::read_file(path);
  std::vector<std::string> cols{"scenario_id"};
  for (int i = 1; i <= kNumSpecies; ++i) cols.push_back("F" + std::to_string(i));
  t.require_columns(cols);
  const int cid = t.column("scenario_id");
  ScenarioBatch batch;
  for (const auto& row : t.rows) {
    FishingScenario s;
    for (int i = 0; i < kNumSpecies; ++i)
      s[i] = t.number(row, t.column("F" + std::to_string(i + 1)));
    s.validate("scenario " + t.field(row, cid));
    batch.ids.push_back(t.field(row, cid));
    batch.scenarios.push_back(s);
  }
  return batch;
}

inline void save_scenarios(const std::string& path, const ScenarioBatch& batch) {
  csv::Writer w(path);
  std::vector<std::string> cols{"scenario_id"};
  for (int i = 1; i <= kNumSpecies; ++i) cols.push_back("F" + std::to_string(i));
  w.header(cols);
  for (int n = 0; n < batch.size(); ++n) {
    auto row = w.row();
    row.text(batch.ids[static_cast<size_t>(n)]);
    for (int i = 0; i < kNumSpecies; ++i)
      row.num(batch.scenarios[static_cast<size_t>(n)][i]);
  }
}

// --------------------------------------------------------------------------
// Simulator outputs: header `scenario_id,year,species,log_tonnes`, one file
// per (simulator, kind), scenarios concatenated.

inline void save_sim_outputs(const std::string& path,
                             const std::vector<std::string>& ids,
                             const std::vector<SpeciesSeries>& runs,
                             const SpeciesCatalog& catalog) {
  if (ids.size() != runs.size())
    throw ValidationError("sim outputs: id/series count mismatch");
  csv::Writer w(path);
  w.header({"scenario_id", "year", "species", "log_tonnes"});
  for (size_t n = 0; n < runs.size(); ++n) {
    const SpeciesSeries& s = runs[n];
    for (int r = 0; r < s.rows(); ++r)
      for (int c = 0; c < s.years.size(); ++c)
        if (s.present(r, c))
          w.row()
              .text(ids[n])
              .integer(s.years.first + c)
              .text(catalog.at(s.species[static_cast<size_t>(r)]).name)
              .num(s.log_values(r, c));
  }
}

inline std::vector<SpeciesSeries> load_sim_outputs(
    const std::string& path, OutputKind kind, const SpeciesCatalog& catalog,
    const std::vector<std::string>& ids, YearRange years,
    const std::vector<int>& species_rows) {
  const csv::Table t = csv::read_file(path);
  t.require_columns({"scenario_id", "year", "species", "log_tonnes"});
  const int cid = t.column("scenario_id"), cy = t.column("year"),
            cs = t.column("species"), cv = t.column("log_tonnes");

  std::map<std::string, size_t> slot;
  for (size_t n = 0; n < ids.size(); ++n) slot[ids[n]] = n;
  std::map<int, int> row_of;
  for (size_t r = 0; r < species_rows.size(); ++r)
    row_of[species_rows[r]] = static_cast<int>(r);

  std::vector<SpeciesSeries> runs(
      ids.size(), SpeciesSeries::empty(kind, years, species_rows));
  for (const auto& row : t.rows) {
    auto it = slot.find(t.field(row, cid));
    if (it == slot.end())
      throw ParseError(path + ":" + std::to_string(row.line) +
                       ": unknown scenario_id '" + t.field(row, cid) + "'");
    const int year = static_cast<int>(t.integer(row, cy));
    const int id = detail::species_row(t, row, cs, catalog);
    auto rit = row_of.find(id);
    if (rit == row_of.end() || !years.contains(year))
      throw ParseError(path + ":" + std::to_string(row.line) +
                       ": cell outside the requested layout");
    SpeciesSeries& s = runs[it->second];
    s.log_values(rit->second, years.offset(year)) = t.number(row, cv);
    s.present(rit->second, years.offset(year)) = true;
  }
  for (auto& s : runs) s.validate();
  return runs;
}

}  // namespace mmsy::data
