/* In-place sort of split-search items by (x, y, pos), with an inlined comparator. */
#ifndef PLAYERVAL_ITEM_SORT_H
#define PLAYERVAL_ITEM_SORT_H

#include <algorithm>
#include <cstddef>

struct Item {
    double x;
    double y;   /* raw target, tie-break only */
    double yc;  /* centred target */
    std::ptrdiff_t pos;
};

static inline bool item_less(const Item& a, const Item& b) {
    if (a.x != b.x) return a.x < b.x;
    if (a.y != b.y) return a.y < b.y;
    return a.pos < b.pos;
}

static inline void sort_items(Item* items, std::ptrdiff_t n) {
    std::sort(items, items + n, item_less);
}

#endif
