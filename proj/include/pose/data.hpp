#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "common.hpp"

namespace pose {

/// One covariate column, stored densely or as sorted (row, value) pairs.
class Column
{
public:
    Column() = default;

    static Column dense(std::vector<double> values)
    {
        Column c;
        c.n_ = values.size();
        c.values_ = std::move(values);
        return c;
    }

    /// Indices must be strictly increasing and < n; zeros are dropped.
    static Column sparse(index_t n, std::vector<std::uint32_t> rows, std::vector<double> values)
    {
        if (rows.size() != values.size())
            throw Error("sparse column: index/value length mismatch");
        Column c;
        c.n_ = n;
        c.sparse_ = true;
        for (index_t k = 0; k < rows.size(); ++k) {
            if (rows[k] >= n)
                throw Error("sparse column: row index " + std::to_string(rows[k]) + " out of range");
            if (k > 0 && rows[k] <= rows[k - 1])
                throw Error("sparse column: row indices not strictly increasing");
            if (values[k] == 0.0) continue;
            c.rows_.push_back(rows[k]);
            c.values_.push_back(values[k]);
        }
        return c;
    }

    /// Chooses sparse storage when more than half the entries are zero.
    static Column from_values(std::vector<double> values)
    {
        const auto zeros = static_cast<index_t>(std::count(values.begin(), values.end(), 0.0));
        if (2 * zeros <= values.size()) return dense(std::move(values));
        std::vector<std::uint32_t> rows;
        std::vector<double> nz;
        for (index_t i = 0; i < values.size(); ++i) {
            if (values[i] == 0.0) continue;
            rows.push_back(static_cast<std::uint32_t>(i));
            nz.push_back(values[i]);
        }
        return sparse(values.size(), std::move(rows), std::move(nz));
    }

    index_t size() const noexcept { return n_; }
    bool is_sparse() const noexcept { return sparse_; }
    index_t nnz() const noexcept { return values_.size(); }
    std::span<const double> values() const noexcept { return values_; }
    std::span<const std::uint32_t> rows() const noexcept { return rows_; }

    template <class F>
    void for_each_nonzero(F&& f) const
    {
        if (sparse_) {
            for (index_t k = 0; k < values_.size(); ++k) f(index_t(rows_[k]), values_[k]);
        } else {
            for (index_t i = 0; i < n_; ++i) f(i, values_[i]);
        }
    }

    // sum_i x_i w_i
    double dot(std::span<const double> w) const noexcept
    {
        double s = 0.0;
        if (sparse_) {
            for (index_t k = 0; k < values_.size(); ++k) s += values_[k] * w[rows_[k]];
        } else {
            for (index_t i = 0; i < n_; ++i) s += values_[i] * w[i];
        }
        return s;
    }

    // sum_i x_i a_i b_i
    double dot(std::span<const double> a, std::span<const double> b) const noexcept
    {
        double s = 0.0;
        if (sparse_) {
            for (index_t k = 0; k < values_.size(); ++k) {
                const auto i = rows_[k];
                s += values_[k] * a[i] * b[i];
            }
        } else {
            for (index_t i = 0; i < n_; ++i) s += values_[i] * a[i] * b[i];
        }
        return s;
    }

    // w += c * x
    void axpy(double c, std::span<double> w) const noexcept
    {
        if (sparse_) {
            for (index_t k = 0; k < values_.size(); ++k) w[rows_[k]] += c * values_[k];
        } else {
            for (index_t i = 0; i < n_; ++i) w[i] += c * values_[i];
        }
    }

    double at(index_t i) const
    {
        if (!sparse_) return values_[i];
        auto it = std::lower_bound(rows_.begin(), rows_.end(), static_cast<std::uint32_t>(i));
        if (it == rows_.end() || *it != i) return 0.0;
        return values_[static_cast<index_t>(it - rows_.begin())];
    }

    std::vector<double> to_dense() const
    {
        std::vector<double> out(n_, 0.0);
        for_each_nonzero([&](index_t i, double x) { out[i] = x; });
        return out;
    }

private:
    index_t n_ = 0;
    bool sparse_ = false;
    std::vector<std::uint32_t> rows_;
    std::vector<double> values_;
};

/// Design matrix, response, column statistics and the free-column partition.
/// Immutable once built; share it by const reference across solvers.
class Dataset
{
public:
    Dataset(std::vector<Column> columns,
            std::vector<double> y,
            Family family,
            std::vector<index_t> free = {},
            std::vector<std::string> names = {})
        : Dataset(std::move(columns), std::move(y), family, std::move(free), std::move(names), false)
    {}

    index_t n() const noexcept { return y_.size(); }
    index_t p() const noexcept { return columns_.size(); }
    Family family() const noexcept { return family_; }
    const Column& column(index_t j) const { return columns_[j]; }
    std::span<const double> y() const noexcept { return y_; }
    double col_mean(index_t j) const { return mean_[j]; }
    double col_sd(index_t j) const { return sd_[j]; }
    std::span<const double> col_means() const noexcept { return mean_; }
    std::span<const double> col_sds() const noexcept { return sd_; }
    bool is_free(index_t j) const { return free_mask_[j] != 0; }
    std::span<const index_t> free() const noexcept { return free_; }
    index_t free_count() const noexcept { return free_.size(); }
    const std::vector<std::string>& names() const noexcept { return names_; }

    /// A copy restricted to `rows` (in the given order). Penalized columns that
    /// become constant on the subset are kept; solvers leave them at zero.
    Dataset subset_rows(std::span<const index_t> rows) const
    {
        std::vector<index_t> remap(n(), index_t(-1));
        for (index_t k = 0; k < rows.size(); ++k) {
            if (rows[k] >= n()) throw Error("subset_rows: row out of range");
            remap[rows[k]] = k;
        }
        const bool sorted = std::is_sorted(rows.begin(), rows.end());
        std::vector<Column> cols;
        cols.reserve(p());
        for (const auto& c : columns_) {
            if (!c.is_sparse()) {
                std::vector<double> v(rows.size());
                for (index_t k = 0; k < rows.size(); ++k) v[k] = c.values()[rows[k]];
                cols.push_back(Column::dense(std::move(v)));
                continue;
            }
            std::vector<std::pair<std::uint32_t, double>> nz;
            c.for_each_nonzero([&](index_t i, double x) {
                if (remap[i] != index_t(-1)) nz.emplace_back(static_cast<std::uint32_t>(remap[i]), x);
            });
            if (!sorted) std::sort(nz.begin(), nz.end());
            std::vector<std::uint32_t> r;
            std::vector<double> v;
            for (auto& [i, x] : nz) {
                r.push_back(i);
                v.push_back(x);
            }
            cols.push_back(Column::sparse(rows.size(), std::move(r), std::move(v)));
        }
        std::vector<double> ys(rows.size());
        for (index_t k = 0; k < rows.size(); ++k) ys[k] = y_[rows[k]];
        return Dataset(std::move(cols), std::move(ys), family_, free_, names_, true);
    }

private:
    Dataset(std::vector<Column> columns,
            std::vector<double> y,
            Family family,
            std::vector<index_t> free,
            std::vector<std::string> names,
            bool allow_constant)
        : columns_(std::move(columns)), y_(std::move(y)), family_(family), names_(std::move(names))
    {
        const index_t nn = y_.size();
        if (nn == 0) throw Error("dataset has no observations");
        if (!names_.empty() && names_.size() != columns_.size())
            throw Error("dataset: names/columns length mismatch");
        for (index_t i = 0; i < nn; ++i) {
            if (!std::isfinite(y_[i])) throw Error("response row " + std::to_string(i) + " is not finite");
            if (family_ == Family::binomial && (y_[i] < 0.0 || y_[i] > 1.0))
                throw Error("binomial response outside [0,1] at row " + std::to_string(i));
        }
        free_mask_.assign(columns_.size(), 0);
        std::sort(free.begin(), free.end());
        free.erase(std::unique(free.begin(), free.end()), free.end());
        for (auto j : free) {
            if (j >= columns_.size()) throw Error("free column index " + std::to_string(j) + " out of range");
            free_mask_[j] = 1;
        }
        free_ = std::move(free);
        mean_.resize(columns_.size());
        sd_.resize(columns_.size());
        for (index_t j = 0; j < columns_.size(); ++j) {
            const auto& c = columns_[j];
            if (c.size() != nn) throw Error("column " + label(j) + " has wrong length");
            double sum = 0.0;
            c.for_each_nonzero([&](index_t, double x) {
                if (!std::isfinite(x)) throw Error("column " + label(j) + " has a non-finite value");
                sum += x;
            });
            const double m = sum / double(nn);
            double ss = 0.0;
            c.for_each_nonzero([&](index_t, double x) { ss += (x - m) * (x - m); });
            if (c.is_sparse()) ss += double(nn - c.nnz()) * m * m;
            mean_[j] = m;
            sd_[j] = std::sqrt(ss / double(nn));
            if (!allow_constant && !free_mask_[j] && !(sd_[j] > 0.0))
                throw Error("constant penalized column " + label(j));
        }
    }

    std::string label(index_t j) const
    {
        if (j < names_.size()) return "'" + names_[j] + "'";
        return std::to_string(j);
    }

    std::vector<Column> columns_;
    std::vector<double> y_;
    Family family_;
    std::vector<std::string> names_;
    std::vector<index_t> free_;
    std::vector<char> free_mask_;
    std::vector<double> mean_;
    std::vector<double> sd_;
};

/// Multiplier on |beta_j| inside the penalty. Zero exactly for free columns.
struct PenaltyScales
{
    std::vector<double> s;
};

inline PenaltyScales penalty_scales(const Dataset& d, bool standardize)
{
    PenaltyScales out;
    out.s.resize(d.p());
    for (index_t j = 0; j < d.p(); ++j) {
        if (d.is_free(j))
            out.s[j] = 0.0;
        else if (standardize && d.col_sd(j) > 0.0)
            out.s[j] = d.col_sd(j);
        else
            out.s[j] = 1.0; // also used for columns constant on a row subset
    }
    return out;
}

namespace detail {

inline std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_csv_line(const std::string& line)
{
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline std::optional<double> parse_double(std::string_view s)
{
    if (s.empty()) return std::nullopt;
    if (s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

} // namespace detail

/// Reads a header-first, comma-separated numeric table. The response column is
/// extracted by name; every other column becomes a covariate.
inline Dataset load_csv(const std::string& path,
                        const std::string& response_name,
                        Family family,
                        std::vector<index_t> free = {})
{
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw Error("'" + path + "' is empty");
    const auto header = detail::split_csv_line(line);
    const auto yit = std::find(header.begin(), header.end(), response_name);
    if (yit == header.end()) throw Error("response column '" + response_name + "' not found in header");
    const auto ycol = static_cast<index_t>(yit - header.begin());

    std::vector<std::vector<double>> cols(header.size());
    index_t row = 0;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) continue;
        ++row;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != header.size())
            throw Error("row " + std::to_string(row) + ": expected " + std::to_string(header.size()) +
                        " cells, found " + std::to_string(cells.size()));
        for (index_t c = 0; c < cells.size(); ++c) {
            auto v = detail::parse_double(cells[c]);
            if (!v)
                throw Error("non-numeric cell at row " + std::to_string(row) + ", column '" + header[c] +
                            "': '" + cells[c] + "'");
            cols[c].push_back(*v);
        }
    }
    if (row == 0) throw Error("'" + path + "' has no data rows");

    std::vector<double> y = std::move(cols[ycol]);
    std::vector<Column> x;
    std::vector<std::string> names;
    for (index_t c = 0; c < cols.size(); ++c) {
        if (c == ycol) continue;
        x.push_back(Column::from_values(std::move(cols[c])));
        names.push_back(header[c]);
    }
    return Dataset(std::move(x), std::move(y), family, std::move(free), std::move(names));
}

/// Reads whitespace-separated `row col value` triplets (optional first line
/// `base=0` or `base=1`) plus a one-value-per-line response file.
inline Dataset load_triplets(const std::string& path,
                             index_t n,
                             index_t p,
                             const std::string& y_path,
                             Family family,
                             std::vector<index_t> free = {})
{
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path + "'");
    long base = 0;
    std::vector<std::vector<std::pair<std::uint32_t, double>>> entries(p);
    std::string line;
    index_t lineno = 0;
    bool first = true;
    while (std::getline(in, line)) {
        ++lineno;
        const auto t = detail::trim(line);
        if (t.empty()) continue;
        if (first && t.rfind("base=", 0) == 0) {
            const auto b = t.substr(5);
            if (b != "0" && b != "1") throw Error("triplets: base must be 0 or 1");
            base = b == "1" ? 1 : 0;
            first = false;
            continue;
        }
        first = false;
        std::istringstream ss(t);
        std::string rs, cs, vs, extra;
        if (!(ss >> rs >> cs >> vs) || (ss >> extra))
            throw Error("triplets line " + std::to_string(lineno) + ": expected 'row col value'");
        auto r = detail::parse_double(rs);
        auto c = detail::parse_double(cs);
        auto v = detail::parse_double(vs);
        if (!r || !c || !v || *r != std::floor(*r) || *c != std::floor(*c))
            throw Error("triplets line " + std::to_string(lineno) + ": malformed entry");
        const double ri = *r - double(base);
        const double ci = *c - double(base);
        if (ri < 0 || ci < 0 || ri >= double(n) || ci >= double(p))
            throw Error("triplets line " + std::to_string(lineno) + ": index out of range");
        entries[index_t(ci)].emplace_back(static_cast<std::uint32_t>(ri), *v);
    }

    std::vector<Column> cols;
    cols.reserve(p);
    for (index_t j = 0; j < p; ++j) {
        auto& e = entries[j];
        std::sort(e.begin(), e.end(), [](auto& a, auto& b) { return a.first < b.first; });
        std::vector<std::uint32_t> rows;
        std::vector<double> vals;
        for (index_t k = 0; k < e.size(); ++k) {
            if (k > 0 && e[k].first == e[k - 1].first)
                throw Error("triplets: duplicate entry (" + std::to_string(e[k].first) + ", " + std::to_string(j) + ")");
            rows.push_back(e[k].first);
            vals.push_back(e[k].second);
        }
        cols.push_back(Column::sparse(n, std::move(rows), std::move(vals)));
    }

    std::ifstream yin(y_path);
    if (!yin) throw Error("cannot open '" + y_path + "'");
    std::vector<double> y;
    while (std::getline(yin, line)) {
        const auto t = detail::trim(line);
        if (t.empty()) continue;
        auto v = detail::parse_double(t);
        if (!v) throw Error("response file: non-numeric value '" + t + "'");
        y.push_back(*v);
    }
    if (y.size() != n)
        throw Error("response length " + std::to_string(y.size()) + " does not match n=" + std::to_string(n));
    return Dataset(std::move(cols), std::move(y), family, std::move(free));
}

/// Writes `d` in the triplet format (base=0) with values at round-trip precision.
inline void write_triplets(const Dataset& d, const std::string& path, const std::string& y_path)
{
    std::ofstream out(path);
    if (!out) throw Error("cannot write '" + path + "'");
    out << "base=0\n" << std::setprecision(17);
    for (index_t j = 0; j < d.p(); ++j)
        d.column(j).for_each_nonzero([&](index_t i, double x) {
            if (x != 0.0) out << i << ' ' << j << ' ' << x << '\n';
        });
    std::ofstream yout(y_path);
    if (!yout) throw Error("cannot write '" + y_path + "'");
    yout << std::setprecision(17);
    for (double v : d.y()) yout << v << '\n';
}

/// Writes `d` as CSV with the response first.
inline void write_csv(const Dataset& d, std::ostream& out, const std::string& response_name = "y")
{
    out << response_name;
    for (index_t j = 0; j < d.p(); ++j) out << ',' << (j < d.names().size() ? d.names()[j] : "x" + std::to_string(j + 1));
    out << '\n' << std::setprecision(17);
    std::vector<std::vector<double>> dense(d.p());
    for (index_t j = 0; j < d.p(); ++j) dense[j] = d.column(j).to_dense();
    for (index_t i = 0; i < d.n(); ++i) {
        out << d.y()[i];
        for (index_t j = 0; j < d.p(); ++j) out << ',' << dense[j][i];
        out << '\n';
    }
}

inline void write_csv(const Dataset& d, const std::string& path, const std::string& response_name = "y")
{
    std::ofstream out(path);
    if (!out) throw Error("cannot write '" + path + "'");
    write_csv(d, out, response_name);
}

} // namespace pose
