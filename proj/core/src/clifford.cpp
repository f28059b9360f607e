#include "mbvqe/clifford.hpp"

#include <complex>
#include <deque>
#include <stdexcept>
#include <vector>

namespace mbvqe {

namespace {

// Product of two single-qubit Paulis: (phase, op), phase in {1, i, -1, -i}.
std::pair<std::complex<double>, char> mul(char a, char b) {
    const std::complex<double> i(0, 1);
    if (a == 'I') return {1.0, b};
    if (b == 'I') return {1.0, a};
    if (a == b) return {1.0, 'I'};
    if (a == 'X' && b == 'Y') return {i, 'Z'};
    if (a == 'Y' && b == 'X') return {-i, 'Z'};
    if (a == 'Y' && b == 'Z') return {i, 'X'};
    if (a == 'Z' && b == 'Y') return {-i, 'X'};
    if (a == 'Z' && b == 'X') return {i, 'Y'};
    return {-i, 'Y'};
}

}  // namespace

SingleQubitClifford SingleQubitClifford::from_word(std::string_view word) {
    SingleQubitClifford h;
    h.x_ = 'Z';
    h.z_ = 'X';
    SingleQubitClifford s;
    s.x_ = 'Y';
    SingleQubitClifford u;
    for (char c : word) {
        if (c == 'H') {
            u = u.then(h);
        } else if (c == 'S') {
            u = u.then(s);
        } else {
            throw std::invalid_argument(std::string("local Clifford word: unknown symbol '") + c + "'");
        }
    }
    return u;
}

std::pair<int, char> SingleQubitClifford::conjugate(char p) const {
    switch (p) {
        case 'I': return {1, 'I'};
        case 'X': return {xs_, x_};
        case 'Z': return {zs_, z_};
        case 'Y': {
            // Y = i X Z
            auto [ph, op] = mul(x_, z_);
            std::complex<double> v = std::complex<double>(0, 1) * ph * double(xs_ * zs_);
            return {v.real() > 0 ? 1 : -1, op};
        }
        default: throw std::invalid_argument("conjugate: not a Pauli symbol");
    }
}

SingleQubitClifford SingleQubitClifford::then(const SingleQubitClifford &next) const {
    SingleQubitClifford r;
    auto [sx, qx] = next.conjugate(x_);
    auto [sz, qz] = next.conjugate(z_);
    r.x_ = qx;
    r.xs_ = sx * xs_;
    r.z_ = qz;
    r.zs_ = sz * zs_;
    return r;
}

SingleQubitClifford SingleQubitClifford::inverse() const {
    // The group is finite: the inverse is the power of order minus one.
    SingleQubitClifford p = *this;
    SingleQubitClifford prev;
    while (!p.is_identity()) {
        prev = p;
        p = p.then(*this);
    }
    return prev;
}

std::string SingleQubitClifford::word() const {
    static const std::vector<std::pair<SingleQubitClifford, std::string>> table = [] {
        std::vector<std::pair<SingleQubitClifford, std::string>> t;
        std::deque<std::string> queue{""};
        while (!queue.empty()) {
            std::string w = queue.front();
            queue.pop_front();
            auto u = from_word(w);
            bool seen = false;
            for (const auto &e : t) {
                if (e.first == u) {
                    seen = true;
                    break;
                }
            }
            if (seen) continue;
            t.push_back({u, w});
            queue.push_back(w + "H");
            queue.push_back(w + "S");
        }
        return t;
    }();
    for (const auto &e : table) {
        if (e.first == *this) return e.second;
    }
    throw std::logic_error("single-qubit Clifford not found");
}

std::string inverse_word(std::string_view word) {
    std::string out;
    for (auto it = word.rbegin(); it != word.rend(); ++it) {
        if (*it == 'H') out += "H";
        else if (*it == 'S') out += "SSS";
        else throw std::invalid_argument("inverse_word: unknown symbol");
    }
    return out;
}

std::string canonical_word(std::string_view word) { return SingleQubitClifford::from_word(word).word(); }

}  // namespace mbvqe
