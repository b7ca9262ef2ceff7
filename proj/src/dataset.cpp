#include "trustnbr/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_set>

#include "trustnbr/error.hpp"
#include "trustnbr/io.hpp"
#include "trustnbr/rng.hpp"

namespace trustnbr {

std::size_t Dataset::positives() const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
}

void Dataset::validate() const {
    if (features.rows() != labels.size() || labels.size() != ids.size())
        throw DataError("dataset: row counts of features, labels and ids differ");
    if (feature_names.size() != features.cols())
        throw DataError("dataset: feature_names length does not match feature count");
    for (int y : labels)
        if (y != 0 && y != 1) throw DataError("dataset: non-binary label");
    for (double v : features.values())
        if (!std::isfinite(v)) throw DataError("dataset: missing or non-finite feature value");
    std::unordered_set<InstanceId> seen;
    for (auto id : ids)
        if (!seen.insert(id).second) throw DataError("dataset: duplicate instance id " + std::to_string(id));
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
    Dataset out;
    out.features = features.select_rows(rows);
    out.feature_names = feature_names;
    out.labels.reserve(rows.size());
    out.ids.reserve(rows.size());
    for (auto r : rows) {
        out.labels.push_back(labels[r]);
        out.ids.push_back(ids[r]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::vector<std::string>> parse_records(const std::string& text) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool in_quotes = false;
    bool field_started = false;
    std::size_t i = 0;
    if (text.size() >= 3 && text.compare(0, 3, "\xEF\xBB\xBF") == 0) i = 3;

    auto end_field = [&] {
        record.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_record = [&] {
        end_field();
        if (!(record.size() == 1 && record[0].empty())) records.push_back(std::move(record));
        record.clear();
    };

    for (; i < text.size(); ++i) {
        const char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(c);
            }
            continue;
        }
        switch (c) {
            case '"':
                if (field_started && !field.empty()) throw DataError("csv: stray quote in unquoted field");
                in_quotes = true;
                field_started = true;
                break;
            case ',':
                end_field();
                break;
            case '\r':
                if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
                end_record();
                break;
            case '\n':
                end_record();
                break;
            default:
                field.push_back(c);
                field_started = true;
        }
    }
    if (in_quotes) throw DataError("csv: unterminated quoted field");
    if (field_started || !record.empty()) end_record();
    return records;
}

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t");
    return std::string(s.substr(b, e - b + 1));
}

bool is_missing(const std::string& s) { return s.empty() || s == "?" || s == "NA" || s == "NaN" || s == "nan"; }

std::optional<double> parse_number(const std::string& s) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (first != last && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || !std::isfinite(v)) return std::nullopt;
    return v;
}

std::string cell_location(std::size_t row, const std::string& column) {
    return "row " + std::to_string(row + 1) + ", column '" + column + "'";
}

}  // namespace

Dataset parse_csv(const std::string& text, const std::string& label_column, const CsvOptions& options) {
    auto records = parse_records(text);
    if (records.empty()) throw DataError("csv: missing header row");
    std::vector<std::string> header;
    for (auto& h : records.front()) header.push_back(trim(h));
    const std::size_t n_cols = header.size();
    const std::size_t n_rows = records.size() - 1;

    auto find_column = [&](const std::string& name) -> std::size_t {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw DataError("csv: column '" + name + "' not found");
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t label_idx = find_column(label_column);
    std::optional<std::size_t> id_idx;
    if (options.id_column) id_idx = find_column(*options.id_column);

    std::vector<std::vector<std::string>> cells(n_rows);
    for (std::size_t r = 0; r < n_rows; ++r) {
        auto& rec = records[r + 1];
        if (rec.size() != n_cols)
            throw DataError("csv: row " + std::to_string(r + 1) + " has " + std::to_string(rec.size()) +
                            " fields, header has " + std::to_string(n_cols));
        for (auto& c : rec) cells[r].push_back(trim(c));
    }

    Dataset d;
    d.labels.resize(n_rows);
    d.ids.resize(n_rows);
    for (std::size_t r = 0; r < n_rows; ++r) {
        auto v = parse_number(cells[r][label_idx]);
        if (!v || (*v != 0.0 && *v != 1.0))
            throw DataError("csv: non-binary label '" + cells[r][label_idx] + "' at " +
                            cell_location(r, label_column));
        d.labels[r] = static_cast<int>(*v);
        if (id_idx) {
            auto idv = parse_number(cells[r][*id_idx]);
            if (!idv || *idv != std::floor(*idv))
                throw DataError("csv: unparseable id at " + cell_location(r, header[*id_idx]));
            d.ids[r] = static_cast<InstanceId>(*idv);
        } else {
            d.ids[r] = static_cast<InstanceId>(r);
        }
    }

    // Column type follows its first non-missing cell.
    std::vector<std::vector<double>> columns;
    for (std::size_t c = 0; c < n_cols; ++c) {
        if (c == label_idx || c == id_idx.value_or(n_cols)) continue;
        const std::string& name = header[c];
        std::optional<bool> numeric;
        for (std::size_t r = 0; r < n_rows && !numeric; ++r)
            if (!is_missing(cells[r][c])) numeric = parse_number(cells[r][c]).has_value();

        if (numeric.value_or(true)) {
            std::vector<double> col(n_rows, std::numeric_limits<double>::quiet_NaN());
            double sum = 0.0;
            std::size_t present = 0;
            for (std::size_t r = 0; r < n_rows; ++r) {
                if (is_missing(cells[r][c])) {
                    if (!options.impute_missing) throw DataError("csv: missing value at " + cell_location(r, name));
                    continue;
                }
                auto v = parse_number(cells[r][c]);
                if (!v) throw DataError("csv: unparseable cell '" + cells[r][c] + "' at " + cell_location(r, name));
                col[r] = *v;
                sum += *v;
                ++present;
            }
            if (present == 0) throw DataError("csv: column '" + name + "' has no values");
            const double mean = sum / static_cast<double>(present);
            for (auto& v : col)
                if (std::isnan(v)) v = mean;
            columns.push_back(std::move(col));
            d.feature_names.push_back(name);
        } else {
            std::set<std::string> categories;
            for (std::size_t r = 0; r < n_rows; ++r) {
                if (is_missing(cells[r][c])) {
                    if (!options.impute_missing) throw DataError("csv: missing value at " + cell_location(r, name));
                    continue;
                }
                categories.insert(cells[r][c]);
            }
            for (const auto& cat : categories) {
                std::vector<double> col(n_rows, 0.0);
                for (std::size_t r = 0; r < n_rows; ++r)
                    if (cells[r][c] == cat) col[r] = 1.0;
                columns.push_back(std::move(col));
                d.feature_names.push_back(name + "=" + cat);
            }
        }
    }

    d.features = Matrix(n_rows, columns.size());
    for (std::size_t j = 0; j < columns.size(); ++j)
        for (std::size_t r = 0; r < n_rows; ++r) d.features(r, j) = columns[j][r];
    d.validate();
    return d;
}

Dataset load_csv(const std::filesystem::path& path, const std::string& label_column, const CsvOptions& options) {
    if (!std::filesystem::exists(path)) throw DataError("csv: missing file " + path.string());
    return parse_csv(read_file(path), label_column, options);
}

namespace {

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

}  // namespace

std::string to_csv(const Dataset& d, const std::string& label_column) {
    std::string out = "id";
    for (const auto& n : d.feature_names) out += "," + csv_escape(n);
    out += "," + csv_escape(label_column) + "\n";
    for (std::size_t r = 0; r < d.size(); ++r) {
        out += std::to_string(d.ids[r]);
        for (double v : d.features.row(r)) out += "," + format_double(v);
        out += "," + std::to_string(d.labels[r]) + "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Split

namespace {

// Integer allocation of `total` proportional to `weights`, largest remainder first,
// ties to the lower index.
std::array<std::size_t, 3> apportion(std::size_t total, const std::array<double, 3>& weights) {
    std::array<std::size_t, 3> out{};
    std::array<double, 3> remainder{};
    const double wsum = weights[0] + weights[1] + weights[2];
    std::size_t assigned = 0;
    for (int p = 0; p < 3; ++p) {
        const double exact = static_cast<double>(total) * weights[p] / wsum;
        out[p] = static_cast<std::size_t>(std::floor(exact));
        remainder[p] = exact - static_cast<double>(out[p]);
        assigned += out[p];
    }
    std::array<int, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return remainder[a] > remainder[b]; });
    for (std::size_t i = 0; assigned < total; ++i, ++assigned) ++out[order[i % 3]];
    return out;
}

}  // namespace

SplitDataset split_three_way(const Dataset& d, const SplitFractions& f, std::uint64_t seed) {
    if (!(f.train > 0 && f.test > 0 && f.production > 0))
        throw std::invalid_argument("split fractions must be positive");
    if (std::abs(f.train + f.test + f.production - 1.0) > 1e-9)
        throw std::invalid_argument("split fractions must sum to 1");

    const std::size_t n = d.size();
    const std::size_t n_pos = d.positives();
    const auto sizes = apportion(n, {f.train, f.test, f.production});
    for (auto s : sizes)
        if (s == 0) throw DataError("empty split part");
    const auto pos = apportion(n_pos, {static_cast<double>(sizes[0]), static_cast<double>(sizes[1]),
                                       static_cast<double>(sizes[2])});

    std::vector<std::size_t> positives, negatives;
    for (std::size_t r = 0; r < n; ++r) (d.labels[r] == 1 ? positives : negatives).push_back(r);
    Rng rng(seed);
    rng.shuffle(positives);
    rng.shuffle(negatives);

    std::array<std::vector<std::size_t>, 3> parts;
    std::size_t pi = 0, ni = 0;
    for (int p = 0; p < 3; ++p) {
        for (std::size_t c = 0; c < pos[p]; ++c) parts[p].push_back(positives[pi++]);
        for (std::size_t c = 0; c < sizes[p] - pos[p]; ++c) parts[p].push_back(negatives[ni++]);
        std::sort(parts[p].begin(), parts[p].end());
    }

    SplitDataset s;
    s.train = d.subset(parts[0]);
    s.test = d.subset(parts[1]);
    s.production = d.subset(parts[2]);
    s.split_seed = seed;
    return s;
}

nlohmann::json split_manifest(const SplitDataset& s) {
    return {{"seed", s.split_seed},
            {"train_ids", s.train.ids},
            {"test_ids", s.test.ids},
            {"production_ids", s.production.ids}};
}

// ---------------------------------------------------------------------------
// Normalizer

Normalizer::Normalizer(std::vector<double> shift, std::vector<double> scale)
    : shift_(std::move(shift)), scale_(std::move(scale)) {
    if (shift_.size() != scale_.size()) throw DimensionError("normalizer: shift/scale length mismatch");
    for (double s : scale_)
        if (!(s > 0.0) || !std::isfinite(s)) throw std::invalid_argument("normalizer: scale must be positive");
}

Normalizer Normalizer::fit(const Dataset& train) {
    const std::size_t n = train.size();
    const std::size_t m = train.n_features();
    if (n == 0) throw DataError("normalizer: empty training data");
    std::vector<double> shift(m, 0.0), scale(m, 1.0);
    for (std::size_t j = 0; j < m; ++j) {
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) sum += train.features(i, j);
        const double mean = sum / static_cast<double>(n);
        double ss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double dlt = train.features(i, j) - mean;
            ss += dlt * dlt;
        }
        const double sd = std::sqrt(ss / static_cast<double>(n));
        shift[j] = mean;
        scale[j] = sd > 1e-12 * std::max(1.0, std::abs(mean)) ? sd : 1.0;
    }
    return Normalizer(std::move(shift), std::move(scale));
}

Dataset Normalizer::apply(const Dataset& d) const {
    if (d.n_features() != n_features())
        throw DimensionError("normalizer: dataset has " + std::to_string(d.n_features()) +
                             " features, normalizer expects " + std::to_string(n_features()));
    Dataset out = d;
    for (std::size_t i = 0; i < out.size(); ++i) {
        auto row = out.features.row(i);
        for (std::size_t j = 0; j < row.size(); ++j) row[j] = (row[j] - shift_[j]) / scale_[j];
    }
    return out;
}

Dataset Normalizer::invert(const Dataset& d) const {
    if (d.n_features() != n_features()) throw DimensionError("normalizer: feature-count mismatch");
    Dataset out = d;
    for (std::size_t i = 0; i < out.size(); ++i) {
        auto row = out.features.row(i);
        for (std::size_t j = 0; j < row.size(); ++j) row[j] = row[j] * scale_[j] + shift_[j];
    }
    return out;
}

nlohmann::json Normalizer::to_json() const {
    return {{"kind", "zscore"}, {"shift", shift_}, {"scale", scale_}};
}

Normalizer Normalizer::from_json(const nlohmann::json& j) {
    try {
        if (j.at("kind") != "zscore") throw FormatError("normalizer: unknown kind");
        return Normalizer(j.at("shift").get<std::vector<double>>(), j.at("scale").get<std::vector<double>>());
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("normalizer: ") + e.what());
    }
}

// ---------------------------------------------------------------------------

Dataset make_phoneme_surrogate(std::size_t n_rows, std::uint64_t seed) {
    static constexpr std::array<double, 5> kScale{0.8, 1.5, 0.6, 2.0, 0.9};
    static constexpr std::array<double, 5> kOffset{0.2, -1.0, 0.5, 3.0, 0.0};
    Rng rng(seed);
    Dataset d;
    d.feature_names = {"Aa", "Ao", "Dcl", "Iy", "Sh"};
    d.features = Matrix(n_rows, 5);
    d.labels.resize(n_rows);
    d.ids.resize(n_rows);
    for (std::size_t i = 0; i < n_rows; ++i) {
        std::array<double, 5> z{};
        for (auto& v : z) v = rng.normal();
        z[2] += 0.5 * z[0];  // correlated pair
        const double g = 1.2 * std::sin(1.5 * z[0]) + z[1] * z[2] - 0.6 * z[3] * z[3] + 0.5 * z[4] +
                         0.4 * z[0] * z[4] - 0.55;
        const double p = 1.0 / (1.0 + std::exp(-3.0 * g));
        d.labels[i] = rng.uniform() < p ? 1 : 0;
        for (std::size_t j = 0; j < 5; ++j) d.features(i, j) = z[j] * kScale[j] + kOffset[j];
        d.ids[i] = static_cast<InstanceId>(i);
    }
    return d;
}

}  // namespace trustnbr
