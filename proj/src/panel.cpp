#include "bhport/panel.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "bhport/csv.hpp"
#include "bhport/errors.hpp"
#include "bhport/log.hpp"

namespace bhport {

int PanelDataset::row_of(int month_index) const {
  auto it = std::lower_bound(dates.begin(), dates.end(), month_index);
  if (it == dates.end() || *it != month_index)
    throw DataError("month " + format_month(month_index) + " is not in the dataset");
  return static_cast<int>(it - dates.begin());
}

Eigen::VectorXd MacroMap::apply(const Eigen::VectorXd& x) const {
  if (!enabled) return x;
  Eigen::VectorXd out(x.size());
  for (int q = 0; q < x.size(); ++q)
    out(q) = sd(q) > 0.0 ? (x(q) - mean(q)) / sd(q) : 0.0;
  return out;
}

SurSystem SurSystem::empty(int n, int k) {
  SurSystem sys;
  sys.responses = Eigen::VectorXd::Zero(0);
  sys.blocks.assign(n, Eigen::MatrixXd::Zero(0, k));
  sys.dims = {n, 0, k, 0, 0};
  sys.macro_map.enabled = false;
  return sys;
}

std::vector<double> standardize_cross_section(const std::vector<double>& raw,
                                              const std::vector<bool>& missing) {
  const std::size_t m = raw.size();
  if (m == 0) throw ConfigError("standardize_cross_section: empty cross section");
  if (missing.size() != m)
    throw ConfigError("standardize_cross_section: missing-flag length mismatch");

  std::vector<std::size_t> idx;
  idx.reserve(m);
  for (std::size_t i = 0; i < m; ++i)
    if (!missing[i]) idx.push_back(i);

  std::vector<double> out(m, 0.0);
  const std::size_t mn = idx.size();
  if (mn <= 1) return out;  // lone value sits at the midpoint

  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return raw[a] < raw[b]; });

  // Average rank over ties, then map rank r to -1 + 2(r-1)/(mn-1).
  std::size_t i = 0;
  while (i < mn) {
    std::size_t j = i;
    while (j + 1 < mn && raw[idx[j + 1]] == raw[idx[i]]) ++j;
    double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based
    double value = -1.0 + 2.0 * (avg_rank - 1.0) / static_cast<double>(mn - 1);
    for (std::size_t t = i; t <= j; ++t) out[idx[t]] = value;
    i = j + 1;
  }
  return out;
}

Eigen::VectorXd build_features(const Eigen::VectorXd& z, const Eigen::VectorXd& x) {
  const int p = static_cast<int>(z.size());
  const int q = static_cast<int>(x.size());
  Eigen::VectorXd f(1 + p + q + p * q);
  f(0) = 1.0;
  f.segment(1, p) = z;
  f.segment(1 + p, q) = x;
  for (int iq = 0; iq < q; ++iq)
    for (int ip = 0; ip < p; ++ip) f(1 + p + q + iq * p + ip) = x(iq) * z(ip);
  return f;
}

namespace {

int find_column(const CsvTable& t, const std::string& name) {
  for (std::size_t i = 0; i < t.header.size(); ++i)
    if (t.header[i] == name) return static_cast<int>(i);
  throw DataError(t.path + ": missing required column '" + name + "'");
}

}  // namespace

PanelDataset load_panel(const std::string& returns_path,
                        const std::string& chars_path,
                        const std::string& macros_path) {
  CsvTable rt = read_csv(returns_path);
  CsvTable ct = read_csv(chars_path);
  CsvTable mt = read_csv(macros_path);

  const int r_date = find_column(rt, "date");
  const int r_asset = find_column(rt, "asset");
  const int r_ret = find_column(rt, "excess_return");
  const int c_date = find_column(ct, "date");
  const int c_asset = find_column(ct, "asset");
  const int m_date = find_column(mt, "date");

  PanelDataset ds;
  for (std::size_t i = 0; i < ct.header.size(); ++i)
    if (static_cast<int>(i) != c_date && static_cast<int>(i) != c_asset)
      ds.char_ids.push_back(ct.header[i]);
  for (std::size_t i = 0; i < mt.header.size(); ++i)
    if (static_cast<int>(i) != m_date) ds.macro_ids.push_back(mt.header[i]);

  // Returns: collect dates, assets, and values keyed by (date, asset).
  std::set<int> ret_dates;
  std::set<std::string> assets;
  std::map<std::pair<int, std::string>, double> ret_values;
  for (std::size_t i = 0; i < rt.rows.size(); ++i) {
    const auto& row = rt.rows[i];
    int date = parse_month(row[r_date], rt.path, i + 2);
    const std::string& asset = row[r_asset];
    if (row[r_ret].empty())
      throw DataError(rt.path + ": row " + std::to_string(i + 2) +
                      ": missing excess_return for asset '" + asset + "'");
    double value = parse_double_cell(row[r_ret], rt.path, i + 2, "excess_return");
    auto key = std::make_pair(date, asset);
    if (!ret_values.emplace(key, value).second)
      throw DataError(rt.path + ": row " + std::to_string(i + 2) +
                      ": duplicate (date, asset) = (" + row[r_date] + ", " + asset +
                      ")");
    ret_dates.insert(date);
    assets.insert(asset);
  }
  if (assets.empty()) throw DataError(rt.path + ": no data rows");

  // Characteristics: values keyed by (date, asset), missing = absent/empty.
  const std::size_t n_chars = ds.char_ids.size();
  std::set<int> char_dates;
  std::map<std::pair<int, std::string>, std::vector<double>> char_values;
  std::map<std::pair<int, std::string>, std::vector<bool>> char_missing;
  for (std::size_t i = 0; i < ct.rows.size(); ++i) {
    const auto& row = ct.rows[i];
    int date = parse_month(row[c_date], ct.path, i + 2);
    auto key = std::make_pair(date, row[c_asset]);
    if (char_values.count(key))
      throw DataError(ct.path + ": row " + std::to_string(i + 2) +
                      ": duplicate (date, asset) = (" + row[c_date] + ", " +
                      row[c_asset] + ")");
    std::vector<double> vals(n_chars, 0.0);
    std::vector<bool> miss(n_chars, true);
    std::size_t ci = 0;
    for (std::size_t col = 0; col < ct.header.size(); ++col) {
      if (static_cast<int>(col) == c_date || static_cast<int>(col) == c_asset)
        continue;
      if (!row[col].empty()) {
        vals[ci] = parse_double_cell(row[col], ct.path, i + 2, ct.header[col]);
        miss[ci] = false;
      }
      ++ci;
    }
    char_values.emplace(key, std::move(vals));
    char_missing.emplace(key, std::move(miss));
    char_dates.insert(date);
  }

  // Macros: complete series required.
  std::set<int> macro_dates;
  std::map<int, std::vector<double>> macro_values;
  for (std::size_t i = 0; i < mt.rows.size(); ++i) {
    const auto& row = mt.rows[i];
    int date = parse_month(row[m_date], mt.path, i + 2);
    if (macro_values.count(date))
      throw DataError(mt.path + ": row " + std::to_string(i + 2) +
                      ": duplicate date " + row[m_date]);
    std::vector<double> vals;
    vals.reserve(ds.macro_ids.size());
    for (std::size_t col = 0; col < mt.header.size(); ++col) {
      if (static_cast<int>(col) == m_date) continue;
      if (row[col].empty())
        throw DataError(mt.path + ": row " + std::to_string(i + 2) +
                        ": missing value for macro '" + mt.header[col] + "'");
      vals.push_back(parse_double_cell(row[col], mt.path, i + 2, mt.header[col]));
    }
    macro_values.emplace(date, std::move(vals));
    macro_dates.insert(date);
  }

  // Common date range = three-way intersection.
  std::vector<int> common;
  for (int d : ret_dates)
    if (char_dates.count(d) && macro_dates.count(d)) common.push_back(d);
  if (common.size() < 24)
    throw DataError("panel files share only " + std::to_string(common.size()) +
                    " common months (need at least 24)");

  ds.dates = common;
  ds.asset_ids.assign(assets.begin(), assets.end());
  const int t_total = static_cast<int>(common.size());
  const int n = static_cast<int>(ds.asset_ids.size());
  const int p = static_cast<int>(n_chars);
  const int q = static_cast<int>(ds.macro_ids.size());

  ds.returns.resize(t_total, n);
  ds.chars.assign(p, Eigen::MatrixXd::Zero(t_total, n));
  ds.macros.resize(t_total, q);

  for (int t = 0; t < t_total; ++t) {
    int date = common[t];
    for (int i = 0; i < n; ++i) {
      auto it = ret_values.find({date, ds.asset_ids[i]});
      if (it == ret_values.end())
        throw DataError(returns_path + ": no return for asset '" + ds.asset_ids[i] +
                        "' at " + format_month(date));
      ds.returns(t, i) = it->second;
    }
    const auto& mv = macro_values.at(date);
    for (int iq = 0; iq < q; ++iq) ds.macros(t, iq) = mv[iq];

    // Standardize each characteristic over this date's cross section.
    for (int ip = 0; ip < p; ++ip) {
      std::vector<double> raw(n, 0.0);
      std::vector<bool> miss(n, true);
      for (int i = 0; i < n; ++i) {
        auto it = char_values.find({date, ds.asset_ids[i]});
        if (it != char_values.end() && !char_missing.at(it->first)[ip]) {
          raw[i] = it->second[ip];
          miss[i] = false;
        }
      }
      auto std_vals = standardize_cross_section(raw, miss);
      for (int i = 0; i < n; ++i) ds.chars[ip](t, i) = std_vals[i];
    }
  }
  return ds;
}

SurSystem build_sur(const PanelDataset& ds, int start_month, int end_month,
                    bool standardize_macros) {
  const int first = ds.row_of(start_month);
  const int last = ds.row_of(end_month);
  const int span = last - first + 1;
  if (span < 2)
    throw ConfigError("build_sur: window must span at least 2 months (got " +
                      std::to_string(span) + ")");
  if (span < 24)
    log::warn("panel", "window spans only " + std::to_string(span) +
                           " months; the prior will dominate");

  const int t = span - 1;  // final month is response-only
  const int n = ds.n_assets();
  const int p = ds.n_chars();
  const int q = ds.n_macros();
  const int k = 1 + p + q + p * q;

  SurSystem sys;
  sys.dims = {n, t, k, p, q};
  sys.window_start_month = start_month;
  sys.window_end_month = end_month;

  sys.macro_map.enabled = standardize_macros;
  sys.macro_map.mean = Eigen::VectorXd::Zero(q);
  sys.macro_map.sd = Eigen::VectorXd::Ones(q);
  if (standardize_macros && q > 0 && t > 0) {
    for (int iq = 0; iq < q; ++iq) {
      double m = ds.macros.col(iq).segment(first, t).mean();
      double var = (ds.macros.col(iq).segment(first, t).array() - m).square().sum() /
                   static_cast<double>(t);
      sys.macro_map.mean(iq) = m;
      sys.macro_map.sd(iq) = var > 0.0 ? std::sqrt(var) : 0.0;
    }
  }

  sys.responses.resize(n * t);
  sys.blocks.assign(n, Eigen::MatrixXd(t, k));
  for (int row = 0; row < t; ++row) {
    const int g = first + row;
    Eigen::VectorXd x = sys.macro_map.apply(ds.macros.row(g).transpose());
    for (int i = 0; i < n; ++i) {
      Eigen::VectorXd z(p);
      for (int ip = 0; ip < p; ++ip) z(ip) = ds.chars[ip](g, i);
      sys.blocks[i].row(row) = build_features(z, x).transpose();
      sys.responses(i * t + row) = ds.returns(g + 1, i);
    }
  }
  return sys;
}

}  // namespace bhport
