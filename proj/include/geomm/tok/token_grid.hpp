#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace geomm::tok {

// Per-modality grid of discrete token ids, one per 16x16 patch.
struct TokenGrid {
    std::string modality;
    int rows = 0, cols = 0;
    long vocab_size = 0;
    std::vector<long> ids;  // row-major

    long at(int r, int c) const { return ids[static_cast<std::size_t>(r) * cols + c]; }
    int size() const { return rows * cols; }

    void validate() const {
        if (static_cast<int>(ids.size()) != rows * cols)
            throw std::invalid_argument("TokenGrid: id count does not match grid shape");
        for (long id : ids)
            if (id < 0 || id >= vocab_size)
                throw std::invalid_argument("TokenGrid: id outside [0, vocab_size)");
    }
};

}  // namespace geomm::tok
