#include "picp/errors.hpp"

#include <sstream>

namespace picp {

namespace {

std::string describe(const std::vector<std::string>& names, double condition)
{
    std::ostringstream out;
    out << "rank-deficient registration system (condition " << condition << "); unconstrained:";
    for (const auto& n : names)
        out << ' ' << n;
    return out.str();
}

}  // namespace

RankDeficient::RankDeficient(std::vector<std::string> unconstrained, double condition)
    : std::runtime_error(describe(unconstrained, condition)),
      unconstrained_(std::move(unconstrained)),
      condition_(condition)
{
}

}  // namespace picp
