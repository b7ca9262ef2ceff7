#include "trustnbr/matrix.hpp"

#include "trustnbr/error.hpp"

namespace trustnbr {

void Matrix::append_row(std::span<const double> r) {
    if (rows_ == 0 && cols_ == 0) cols_ = r.size();
    if (r.size() != cols_) throw DimensionError("append_row: row has wrong length");
    values_.insert(values_.end(), r.begin(), r.end());
    ++rows_;
}

Matrix Matrix::select_rows(std::span<const std::size_t> indices) const {
    Matrix out(indices.size(), cols_);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        auto src = row(indices[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

}  // namespace trustnbr
