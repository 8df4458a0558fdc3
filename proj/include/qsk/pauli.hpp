#pragma once

// Pauli-string operators: ordered products of single-site Pauli / ladder
// operators with pairwise-distinct sites.  Site indices are zero-based.

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace qsk {

enum class PauliAxis : char { X = 'x', Y = 'y', Z = 'z', Plus = '+', Minus = '-' };

struct PauliOp {
    int site = 0;
    PauliAxis axis = PauliAxis::Z;
};

// A product of at most four single-site operators on distinct sites.
using PauliString = std::vector<PauliOp>;

inline void validate_pauli_string(const PauliString& op, int n, std::size_t max_sites = 4) {
    if (op.size() > max_sites)
        throw std::invalid_argument("pauli string touches more than " +
                                    std::to_string(max_sites) + " sites");
    for (std::size_t i = 0; i < op.size(); ++i) {
        if (op[i].site < 0 || op[i].site >= n)
            throw std::out_of_range("pauli operator site out of range");
        for (std::size_t j = i + 1; j < op.size(); ++j)
            if (op[i].site == op[j].site)
                throw std::invalid_argument("pauli string sites must be distinct");
    }
}

}  // namespace qsk
