#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

namespace bhport {

// Aligned monthly panel. chars[p] is T_total x N of standardized values in
// [-1, 1] (imputed entries exactly 0). macros holds the raw series; the
// training-window affine map is applied at fit time and recorded with the
// fitted model. Row t of chars/macros predicts row t+1 of returns.
struct PanelDataset {
  std::vector<int> dates;                 // strictly increasing month indices
  Eigen::MatrixXd returns;                // T_total x N, excess, decimal/month
  std::vector<Eigen::MatrixXd> chars;     // P matrices, each T_total x N
  Eigen::MatrixXd macros;                 // T_total x Q, raw
  std::vector<std::string> asset_ids;
  std::vector<std::string> char_ids;
  std::vector<std::string> macro_ids;

  int t_total() const { return static_cast<int>(returns.rows()); }
  int n_assets() const { return static_cast<int>(returns.cols()); }
  int n_chars() const { return static_cast<int>(chars.size()); }
  int n_macros() const { return static_cast<int>(macros.cols()); }

  // Row index for a month, or error if absent.
  int row_of(int month_index) const;
};

struct Dims {
  int n = 0;  // assets
  int t = 0;  // regression rows in the window
  int k = 0;  // 1 + p + q + p*q
  int p = 0;  // characteristics
  int q = 0;  // macro predictors
};

// Per-macro affine map x -> (x - mean) / sd applied when building regressors;
// identity when disabled. sd == 0 marks a constant macro mapped to 0.
struct MacroMap {
  bool enabled = true;
  Eigen::VectorXd mean;  // Q
  Eigen::VectorXd sd;    // Q
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
};

// Stacked regression system for one window, asset-major: responses segment i
// holds asset i's returns shifted one month ahead of its regressor rows.
struct SurSystem {
  Eigen::VectorXd responses;            // N*T
  std::vector<Eigen::MatrixXd> blocks;  // N matrices, each T x K
  Dims dims;
  MacroMap macro_map;
  int window_start_month = 0;  // first regressor month
  int window_end_month = 0;    // final month (response only)

  Eigen::VectorBlock<const Eigen::VectorXd> response(int asset) const {
    return responses.segment(asset * dims.t, dims.t);
  }

  // T = 0 system (prior-only sampling).
  static SurSystem empty(int n, int k);
};

// Rank-uniform standardization of one cross section to [-1, 1]: rank r
// (1-based ascending, ties averaged) maps to -1 + 2(r-1)/(M-1) over the
// non-missing values; missing entries map to 0, as does a lone value.
std::vector<double> standardize_cross_section(const std::vector<double>& raw,
                                              const std::vector<bool>& missing);

// Regressor layout [1, z, x, x (x) z] with the interaction block macro-major:
// element (q, p) sits at 1 + P + Q + q*P + p and equals x[q]*z[p].
Eigen::VectorXd build_features(const Eigen::VectorXd& z, const Eigen::VectorXd& x);

// Reads the three panel files, intersects their dates (>= 24 months
// required), standardizes characteristics per cross section, and returns the
// aligned dataset. Errors carry file and row context.
PanelDataset load_panel(const std::string& returns_path,
                        const std::string& chars_path,
                        const std::string& macros_path);

// Builds the SUR system for the window whose months span
// [start_month, end_month] inclusive (both present in ds): T = span - 1
// regressor rows, the final month entering only as a response. Macro
// standardization is computed over the window's regressor rows.
SurSystem build_sur(const PanelDataset& ds, int start_month, int end_month,
                    bool standardize_macros = true);

}  // namespace bhport
