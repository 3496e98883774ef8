#include "picp/neighbor_index.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <queue>
#include <stdexcept>

namespace picp {

namespace {

constexpr std::uint32_t kLeafSize = 12;

bool closer(const Neighbor& a, const Neighbor& b)
{
    return a.squared_distance < b.squared_distance ||
           (a.squared_distance == b.squared_distance && a.index < b.index);
}

struct NearestVisitor
{
    Neighbor best{std::numeric_limits<std::size_t>::max(), std::numeric_limits<double>::infinity()};

    double bound() const { return best.squared_distance; }
    bool done() const { return false; }
    void visit(const Neighbor& n)
    {
        if (closer(n, best))
            best = n;
    }
};

struct KnnVisitor
{
    explicit KnnVisitor(std::size_t k) : k(k) {}

    std::size_t k;
    // max-heap under `closer`: top is the current worst of the k best
    std::priority_queue<Neighbor, std::vector<Neighbor>, decltype(&closer)> heap{&closer};

    double bound() const
    {
        return heap.size() < k ? std::numeric_limits<double>::infinity() : heap.top().squared_distance;
    }
    bool done() const { return false; }
    void visit(const Neighbor& n)
    {
        if (heap.size() < k)
            heap.push(n);
        else if (closer(n, heap.top()))
        {
            heap.pop();
            heap.push(n);
        }
    }
};

struct RadiusVisitor
{
    double r2;
    std::vector<Neighbor> found;

    double bound() const { return r2; }
    bool done() const { return false; }
    void visit(const Neighbor& n)
    {
        if (n.squared_distance <= r2)
            found.push_back(n);
    }
};

struct AnyVisitor
{
    double r2;
    bool hit = false;

    double bound() const { return r2; }
    bool done() const { return hit; }
    void visit(const Neighbor& n)
    {
        if (n.squared_distance <= r2)
            hit = true;
    }
};

}  // namespace

NeighborIndex::NeighborIndex(std::span<const Vec3> points)
{
    if (points.empty())
        throw std::invalid_argument("NeighborIndex: cannot index an empty point set");
    if (points.size() >= std::numeric_limits<std::uint32_t>::max())
        throw std::invalid_argument("NeighborIndex: too many points");

    points_.assign(points.begin(), points.end());
    original_.resize(points.size());
    std::iota(original_.begin(), original_.end(), std::size_t{0});
    nodes_.reserve(2 * points.size() / kLeafSize + 1);
    build(0, static_cast<std::uint32_t>(points.size()));

    std::vector<Vec3> permuted(points_.size());
    for (std::size_t i = 0; i < original_.size(); ++i)
        permuted[i] = points[original_[i]];
    points_ = std::move(permuted);
}

std::int32_t NeighborIndex::build(std::uint32_t begin, std::uint32_t end)
{
    const auto id = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back(Node{begin, end, -1, -1, 0, 0.0});
    if (end - begin <= kLeafSize)
        return id;

    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (std::uint32_t i = begin; i < end; ++i)
    {
        lo = lo.cwiseMin(points_[original_[i]]);
        hi = hi.cwiseMax(points_[original_[i]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    if (hi[axis] == lo[axis])
        return id;  // all coincident: keep as one leaf

    const std::uint32_t mid = begin + (end - begin) / 2;
    auto key_less = [&](std::size_t a, std::size_t b) {
        const double ca = points_[a][axis];
        const double cb = points_[b][axis];
        return ca < cb || (ca == cb && a < b);
    };
    std::nth_element(original_.begin() + begin, original_.begin() + mid, original_.begin() + end, key_less);
    const double split = points_[original_[mid]][axis];

    const std::int32_t left = build(begin, mid);
    const std::int32_t right = build(mid, end);
    nodes_[id].left = left;
    nodes_[id].right = right;
    nodes_[id].axis = axis;
    nodes_[id].split = split;
    return id;
}

template <typename Visitor>
void NeighborIndex::search(const Vec3& query, Visitor& visitor) const
{
    // explicit stack of (node, lower bound on squared distance to its cell)
    struct Pending
    {
        std::int32_t node;
        double min_d2;
    };
    std::vector<Pending> stack;
    stack.reserve(64);
    stack.push_back({0, 0.0});
    while (!stack.empty() && !visitor.done())
    {
        const Pending top = stack.back();
        stack.pop_back();
        if (top.min_d2 > visitor.bound())
            continue;
        const Node& node = nodes_[top.node];
        if (node.left < 0)
        {
            for (std::uint32_t i = node.begin; i < node.end; ++i)
            {
                visitor.visit(Neighbor{original_[i], (points_[i] - query).squaredNorm()});
                if (visitor.done())
                    return;
            }
            continue;
        }
        const double diff = query[node.axis] - node.split;
        const std::int32_t near = diff < 0.0 ? node.left : node.right;
        const std::int32_t far = diff < 0.0 ? node.right : node.left;
        // far side first on the stack so the near side is explored first
        stack.push_back({far, std::max(top.min_d2, diff * diff)});
        stack.push_back({near, top.min_d2});
    }
}

Neighbor NeighborIndex::nearest(const Vec3& query) const
{
    NearestVisitor v;
    search(query, v);
    return v.best;
}

std::vector<Neighbor> NeighborIndex::knn(const Vec3& query, std::size_t k) const
{
    if (k == 0)
        return {};
    KnnVisitor v(k);
    search(query, v);
    std::vector<Neighbor> out;
    out.reserve(v.heap.size());
    while (!v.heap.empty())
    {
        out.push_back(v.heap.top());
        v.heap.pop();
    }
    std::reverse(out.begin(), out.end());
    return out;
}

std::vector<Neighbor> NeighborIndex::radius(const Vec3& query, double radius) const
{
    RadiusVisitor v{radius * radius, {}};
    search(query, v);
    std::sort(v.found.begin(), v.found.end(), closer);
    return v.found;
}

bool NeighborIndex::any_within(const Vec3& query, double radius) const
{
    AnyVisitor v{radius * radius};
    search(query, v);
    return v.hit;
}

NeighborIndex build_index(const PointCloud& cloud)
{
    return NeighborIndex(cloud);
}

}  // namespace picp
