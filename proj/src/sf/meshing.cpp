#include "sf/meshing.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "sf/parallel.hpp"

namespace sf {

namespace {

constexpr int kTruncVoxels = 4;
constexpr real kAlphaGate = 0.5;

// Cell corner layout (bit i of the case index) and the 12 cell edges between
// them, in the classic marching-cubes numbering: corners 0-3 on the lower z
// face counter-clockwise, 4-7 above them, edges 0-3 around the bottom, 4-7
// around the top, 8-11 vertical.
constexpr int kCornerOff[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                                  {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
constexpr int kEdgeCorner[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                                    {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};

// Triangulation per corner-sign case: triples of edge indices, -1 terminated.
// The standard public-domain table (Lorensen-Cline cases in the Bourke
// layout); each listed edge provably joins an inside corner to an outside
// one, which the tests re-verify against the corner bits for all 256 cases.
constexpr std::int8_t kTriTable[256][16] = {
    {-1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {0, 8, 3, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {0, 1, 9, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {1, 8, 3, 9, 8, 1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {1, 2, 10, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {0, 8, 3, 1, 2, 10, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {9, 2, 10, 0, 2, 9, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {2, 8, 3, 2, 10, 8, 10, 9, 8, -1, -1, -1, -1, -1, -1, -1},
    {3, 11, 2, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {0, 11, 2, 8, 11, 0, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {1, 9, 0, 2, 3, 11, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {1, 11, 2, 1, 9, 11, 9, 8, 11, -1, -1, -1, -1, -1, -1, -1},
    {3, 10, 1, 11, 10, 3, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {0, 10, 1, 0, 8, 10, 8, 11, 10, -1, -1, -1, -1, -1, -1, -1},
    {3, 9, 0, 3, 11, 9, 11, 10, 9, -1, -1, -1, -1, -1, -1, -1},
    {9, 8, 10, 10, 8, 11, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {4, 7, 8, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {4, 3, 0, 7, 3, 4, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {0, 1, 9, 8, 4, 7, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {4, 1, 9, 4, 7, 1, 7, 3, 1, -1, -1, -1, -1, -1, -1, -1},
    {1, 2, 10, 8, 4, 7, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {3, 4, 7, 3, 0, 4, 1, 2, 10, -1, -1, -1, -1, -1, -1, -1},
    {9, 2, 10, 9, 0, 2, 8, 4, 7, -1, -1, -1, -1, -1, -1, -1},
    {2, 10, 9, 2, 9, 7, 2, 7, 3, 7, 9, 4, -1, -1, -1, -1},
    {8, 4, 7, 3, 11, 2, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {11, 4, 7, 11, 2, 4, 2, 0, 4, -1, -1, -1, -1, -1, -1, -1},
    {9, 0, 1, 8, 4, 7, 2, 3, 11, -1, -1, -1, -1, -1, -1, -1},
    {4, 7, 11, 9, 4, 11, 9, 11, 2, 9, 2, 1, -1, -1, -1, -1},
    {3, 10, 1, 3, 11, 10, 7, 8, 4, -1, -1, -1, -1, -1, -1, -1},
    {1, 11, 10, 1, 4, 11, 1, 0, 4, 7, 11, 4, -1, -1, -1, -1},
    {4, 7, 8, 9, 0, 11, 9, 11, 10, 11, 0, 3, -1, -1, -1, -1},
    {4, 7, 11, 4, 11, 9, 9, 11, 10, -1, -1, -1, -1, -1, -1, -1},
    {9, 5, 4, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {9, 5, 4, 0, 8, 3, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {0, 5, 4, 1, 5, 0, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {8, 5, 4, 8, 3, 5, 3, 1, 5, -1, -1, -1, -1, -1, -1, -1},
    {1, 2, 10, 9, 5, 4, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {3, 0, 8, 1, 2, 10, 4, 9, 5, -1, -1, -1, -1, -1, -1, -1},
    {5, 2, 10, 5, 4, 2, 4, 0, 2, -1, -1, -1, -1, -1, -1, -1},
    {2, 10, 5, 3, 2, 5, 3, 5, 4, 3, 4, 8, -1, -1, -1, -1},
    {9, 5, 4, 2, 3, 11, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {0, 11, 2, 0, 8, 11, 4, 9, 5, -1, -1, -1, -1, -1, -1, -1},
    {0, 5, 4, 0, 1, 5, 2, 3, 11, -1, -1, -1, -1, -1, -1, -1},
    {2, 1, 5, 2, 5, 8, 2, 8, 11, 4, 8, 5, -1, -1, -1, -1},
    {10, 3, 11, 10, 1, 3, 9, 5, 4, -1, -1, -1, -1, -1, -1, -1},
    {4, 9, 5, 0, 8, 1, 8, 10, 1, 8, 11, 10, -1, -1, -1, -1},
    {5, 4, 0, 5, 0, 11, 5, 11, 10, 11, 0, 3, -1, -1, -1, -1},
    {5, 4, 8, 5, 8, 10, 10, 8, 11, -1, -1, -1, -1, -1, -1, -1},
    {9, 7, 8, 5, 7, 9, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {9, 3, 0, 9, 5, 3, 5, 7, 3, -1, -1, -1, -1, -1, -1, -1},
    {0, 7, 8, 0, 1, 7, 1, 5, 7, -1, -1, -1, -1, -1, -1, -1},
    {1, 5, 3, 3, 5, 7, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {9, 7, 8, 9, 5, 7, 10, 1, 2, -1, -1, -1, -1, -1, -1, -1},
    {10, 1, 2, 9, 5, 0, 5, 3, 0, 5, 7, 3, -1, -1, -1, -1},
    {8, 0, 2, 8, 2, 5, 8, 5, 7, 10, 5, 2, -1, -1, -1, -1},
    {2, 10, 5, 2, 5, 3, 3, 5, 7, -1, -1, -1, -1, -1, -1, -1},
    {7, 9, 5, 7, 8, 9, 3, 11, 2, -1, -1, -1, -1, -1, -1, -1},
    {9, 5, 7, 9, 7, 2, 9, 2, 0, 2, 7, 11, -1, -1, -1, -1},
    {2, 3, 11, 0, 1, 8, 1, 7, 8, 1, 5, 7, -1, -1, -1, -1},
    {11, 2, 1, 11, 1, 7, 7, 1, 5, -1, -1, -1, -1, -1, -1, -1},
    {9, 5, 8, 8, 5, 7, 10, 1, 3, 10, 3, 11, -1, -1, -1, -1},
    {5, 7, 0, 5, 0, 9, 7, 11, 0, 1, 0, 10, 11, 10, 0, -1},
    {11, 10, 0, 11, 0, 3, 10, 5, 0, 8, 0, 7, 5, 7, 0, -1},
    {11, 10, 5, 7, 11, 5, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {10, 6, 5, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {0, 8, 3, 5, 10, 6, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {9, 0, 1, 5, 10, 6, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {1, 8, 3, 1, 9, 8, 5, 10, 6, -1, -1, -1, -1, -1, -1, -1},
    {1, 6, 5, 2, 6, 1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {1, 6, 5, 1, 2, 6, 3, 0, 8, -1, -1, -1, -1, -1, -1, -1},
    {9, 6, 5, 9, 0, 6, 0, 2, 6, -1, -1, -1, -1, -1, -1, -1},
    {5, 9, 8, 5, 8, 2, 5, 2, 6, 3, 2, 8, -1, -1, -1, -1},
    {2, 3, 11, 10, 6, 5, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {11, 0, 8, 11, 2, 0, 10, 6, 5, -1, -1, -1, -1, -1, -1, -1},
    {0, 1, 9, 2, 3, 11, 5, 10, 6, -1, -1, -1, -1, -1, -1, -1},
    {5, 10, 6, 1, 9, 2, 9, 11, 2, 9, 8, 11, -1, -1, -1, -1},
    {6, 3, 11, 6, 5, 3, 5, 1, 3, -1, -1, -1, -1, -1, -1, -1},
    {0, 8, 11, 0, 11, 5, 0, 5, 1, 5, 11, 6, -1, -1, -1, -1},
    {3, 11, 6, 0, 3, 6, 0, 6, 5, 0, 5, 9, -1, -1, -1, -1},
    {6, 5, 9, 6, 9, 11, 11, 9, 8, -1, -1, -1, -1, -1, -1, -1},
    {5, 10, 6, 4, 7, 8, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {4, 3, 0, 4, 7, 3, 6, 5, 10, -1, -1, -1, -1, -1, -1, -1},
    {1, 9, 0, 5, 10, 6, 8, 4, 7, -1, -1, -1, -1, -1, -1, -1},
    {10, 6, 5, 1, 9, 7, 1, 7, 3, 7, 9, 4, -1, -1, -1, -1},
    {6, 1, 2, 6, 5, 1, 4, 7, 8, -1, -1, -1, -1, -1, -1, -1},
    {1, 2, 5, 5, 2, 6, 3, 0, 4, 3, 4, 7, -1, -1, -1, -1},
    {8, 4, 7, 9, 0, 5, 0, 6, 5, 0, 2, 6, -1, -1, -1, -1},
    {7, 3, 9, 7, 9, 4, 3, 2, 9, 5, 9, 6, 2, 6, 9, -1},
    {3, 11, 2, 7, 8, 4, 10, 6, 5, -1, -1, -1, -1, -1, -1, -1},
    {5, 10, 6, 4, 7, 2, 4, 2, 0, 2, 7, 11, -1, -1, -1, -1},
    {0, 1, 9, 4, 7, 8, 2, 3, 11, 5, 10, 6, -1, -1, -1, -1},
    {9, 2, 1, 9, 11, 2, 9, 4, 11, 7, 11, 4, 5, 10, 6, -1},
    {8, 4, 7, 3, 11, 5, 3, 5, 1, 5, 11, 6, -1, -1, -1, -1},
    {5, 1, 11, 5, 11, 6, 1, 0, 11, 7, 11, 4, 0, 4, 11, -1},
    {0, 5, 9, 0, 6, 5, 0, 3, 6, 11, 6, 3, 8, 4, 7, -1},
    {6, 5, 9, 6, 9, 11, 4, 7, 9, 7, 11, 9, -1, -1, -1, -1},
    {10, 4, 9, 6, 4, 10, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {4, 10, 6, 4, 9, 10, 0, 8, 3, -1, -1, -1, -1, -1, -1, -1},
    {10, 0, 1, 10, 6, 0, 6, 4, 0, -1, -1, -1, -1, -1, -1, -1},
    {8, 3, 1, 8, 1, 6, 8, 6, 4, 6, 1, 10, -1, -1, -1, -1},
    {1, 4, 9, 1, 2, 4, 2, 6, 4, -1, -1, -1, -1, -1, -1, -1},
    {3, 0, 8, 1, 2, 9, 2, 4, 9, 2, 6, 4, -1, -1, -1, -1},
    {0, 2, 4, 4, 2, 6, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {8, 3, 2, 8, 2, 4, 4, 2, 6, -1, -1, -1, -1, -1, -1, -1},
    {10, 4, 9, 10, 6, 4, 11, 2, 3, -1, -1, -1, -1, -1, -1, -1},
    {0, 8, 2, 2, 8, 11, 4, 9, 10, 4, 10, 6, -1, -1, -1, -1},
    {3, 11, 2, 0, 1, 6, 0, 6, 4, 6, 1, 10, -1, -1, -1, -1},
    {6, 4, 1, 6, 1, 10, 4, 8, 1, 2, 1, 11, 8, 11, 1, -1},
    {9, 6, 4, 9, 3, 6, 9, 1, 3, 11, 6, 3, -1, -1, -1, -1},
    {8, 11, 1, 8, 1, 0, 11, 6, 1, 9, 1, 4, 6, 4, 1, -1},
    {3, 11, 6, 3, 6, 0, 0, 6, 4, -1, -1, -1, -1, -1, -1, -1},
    {6, 4, 8, 11, 6, 8, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {7, 10, 6, 7, 8, 10, 8, 9, 10, -1, -1, -1, -1, -1, -1, -1},
    {0, 7, 3, 0, 10, 7, 0, 9, 10, 6, 7, 10, -1, -1, -1, -1},
    {10, 6, 7, 1, 10, 7, 1, 7, 8, 1, 8, 0, -1, -1, -1, -1},
    {10, 6, 7, 10, 7, 1, 1, 7, 3, -1, -1, -1, -1, -1, -1, -1},
    {1, 2, 6, 1, 6, 8, 1, 8, 9, 8, 6, 7, -1, -1, -1, -1},
    {2, 6, 9, 2, 9, 1, 6, 7, 9, 0, 9, 3, 7, 3, 9, -1},
    {7, 8, 0, 7, 0, 6, 6, 0, 2, -1, -1, -1, -1, -1, -1, -1},
    {7, 3, 2, 6, 7, 2, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {2, 3, 11, 10, 6, 8, 10, 8, 9, 8, 6, 7, -1, -1, -1, -1},
    {2, 0, 7, 2, 7, 11, 0, 9, 7, 6, 7, 10, 9, 10, 7, -1},
    {1, 8, 0, 1, 7, 8, 1, 10, 7, 6, 7, 10, 2, 3, 11, -1},
    {11, 2, 1, 11, 1, 7, 10, 6, 1, 6, 7, 1, -1, -1, -1, -1},
    {8, 9, 6, 8, 6, 7, 9, 1, 6, 11, 6, 3, 1, 3, 6, -1},
    {0, 9, 1, 11, 6, 7, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {7, 8, 0, 7, 0, 6, 3, 11, 0, 11, 6, 0, -1, -1, -1, -1},
    {7, 11, 6, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {7, 6, 11, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {3, 0, 8, 11, 7, 6, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {0, 1, 9, 11, 7, 6, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {8, 1, 9, 8, 3, 1, 11, 7, 6, -1, -1, -1, -1, -1, -1, -1},
    {10, 1, 2, 6, 11, 7, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {1, 2, 10, 3, 0, 8, 6, 11, 7, -1, -1, -1, -1, -1, -1, -1},
    {2, 9, 0, 2, 10, 9, 6, 11, 7, -1, -1, -1, -1, -1, -1, -1},
    {6, 11, 7, 2, 10, 3, 10, 8, 3, 10, 9, 8, -1, -1, -1, -1},
    {7, 2, 3, 6, 2, 7, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {7, 0, 8, 7, 6, 0, 6, 2, 0, -1, -1, -1, -1, -1, -1, -1},
    {2, 7, 6, 2, 3, 7, 0, 1, 9, -1, -1, -1, -1, -1, -1, -1},
    {1, 6, 2, 1, 8, 6, 1, 9, 8, 8, 7, 6, -1, -1, -1, -1},
    {10, 7, 6, 10, 1, 7, 1, 3, 7, -1, -1, -1, -1, -1, -1, -1},
    {10, 7, 6, 1, 7, 10, 1, 8, 7, 1, 0, 8, -1, -1, -1, -1},
    {0, 3, 7, 0, 7, 10, 0, 10, 9, 6, 10, 7, -1, -1, -1, -1},
    {7, 6, 10, 7, 10, 8, 8, 10, 9, -1, -1, -1, -1, -1, -1, -1},
    {6, 8, 4, 11, 8, 6, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {3, 6, 11, 3, 0, 6, 0, 4, 6, -1, -1, -1, -1, -1, -1, -1},
    {8, 6, 11, 8, 4, 6, 9, 0, 1, -1, -1, -1, -1, -1, -1, -1},
    {9, 4, 6, 9, 6, 3, 9, 3, 1, 11, 3, 6, -1, -1, -1, -1},
    {6, 8, 4, 6, 11, 8, 2, 10, 1, -1, -1, -1, -1, -1, -1, -1},
    {1, 2, 10, 3, 0, 11, 0, 6, 11, 0, 4, 6, -1, -1, -1, -1},
    {4, 11, 8, 4, 6, 11, 0, 2, 9, 2, 10, 9, -1, -1, -1, -1},
    {10, 9, 3, 10, 3, 2, 9, 4, 3, 11, 3, 6, 4, 6, 3, -1},
    {8, 2, 3, 8, 4, 2, 4, 6, 2, -1, -1, -1, -1, -1, -1, -1},
    {0, 4, 2, 4, 6, 2, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {1, 9, 0, 2, 3, 4, 2, 4, 6, 4, 3, 8, -1, -1, -1, -1},
    {1, 9, 4, 1, 4, 2, 2, 4, 6, -1, -1, -1, -1, -1, -1, -1},
    {8, 1, 3, 8, 6, 1, 8, 4, 6, 6, 10, 1, -1, -1, -1, -1},
    {10, 1, 0, 10, 0, 6, 6, 0, 4, -1, -1, -1, -1, -1, -1, -1},
    {4, 6, 3, 4, 3, 8, 6, 10, 3, 0, 3, 9, 10, 9, 3, -1},
    {10, 9, 4, 6, 10, 4, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {4, 9, 5, 7, 6, 11, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {0, 8, 3, 4, 9, 5, 11, 7, 6, -1, -1, -1, -1, -1, -1, -1},
    {5, 0, 1, 5, 4, 0, 7, 6, 11, -1, -1, -1, -1, -1, -1, -1},
    {11, 7, 6, 8, 3, 4, 3, 5, 4, 3, 1, 5, -1, -1, -1, -1},
    {9, 5, 4, 10, 1, 2, 7, 6, 11, -1, -1, -1, -1, -1, -1, -1},
    {6, 11, 7, 1, 2, 10, 0, 8, 3, 4, 9, 5, -1, -1, -1, -1},
    {7, 6, 11, 5, 4, 10, 4, 2, 10, 4, 0, 2, -1, -1, -1, -1},
    {3, 4, 8, 3, 5, 4, 3, 2, 5, 10, 5, 2, 11, 7, 6, -1},
    {7, 2, 3, 7, 6, 2, 5, 4, 9, -1, -1, -1, -1, -1, -1, -1},
    {9, 5, 4, 0, 8, 6, 0, 6, 2, 6, 8, 7, -1, -1, -1, -1},
    {3, 6, 2, 3, 7, 6, 1, 5, 0, 5, 4, 0, -1, -1, -1, -1},
    {6, 2, 8, 6, 8, 7, 2, 1, 8, 4, 8, 5, 1, 5, 8, -1},
    {9, 5, 4, 10, 1, 6, 1, 7, 6, 1, 3, 7, -1, -1, -1, -1},
    {1, 6, 10, 1, 7, 6, 1, 0, 7, 8, 7, 0, 9, 5, 4, -1},
    {4, 0, 10, 4, 10, 5, 0, 3, 10, 6, 10, 7, 3, 7, 10, -1},
    {7, 6, 10, 7, 10, 8, 5, 4, 10, 4, 8, 10, -1, -1, -1, -1},
    {6, 9, 5, 6, 11, 9, 11, 8, 9, -1, -1, -1, -1, -1, -1, -1},
    {3, 6, 11, 0, 6, 3, 0, 5, 6, 0, 9, 5, -1, -1, -1, -1},
    {0, 11, 8, 0, 5, 11, 0, 1, 5, 5, 6, 11, -1, -1, -1, -1},
    {6, 11, 3, 6, 3, 5, 5, 3, 1, -1, -1, -1, -1, -1, -1, -1},
    {1, 2, 10, 9, 5, 11, 9, 11, 8, 11, 5, 6, -1, -1, -1, -1},
    {0, 11, 3, 0, 6, 11, 0, 9, 6, 5, 6, 9, 1, 2, 10, -1},
    {11, 8, 5, 11, 5, 6, 8, 0, 5, 10, 5, 2, 0, 2, 5, -1},
    {6, 11, 3, 6, 3, 5, 2, 10, 3, 10, 5, 3, -1, -1, -1, -1},
    {5, 8, 9, 5, 2, 8, 5, 6, 2, 3, 8, 2, -1, -1, -1, -1},
    {9, 5, 6, 9, 6, 0, 0, 6, 2, -1, -1, -1, -1, -1, -1, -1},
    {1, 5, 8, 1, 8, 0, 5, 6, 8, 3, 8, 2, 6, 2, 8, -1},
    {1, 5, 6, 2, 1, 6, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {1, 3, 6, 1, 6, 10, 3, 8, 6, 5, 6, 9, 8, 9, 6, -1},
    {10, 1, 0, 10, 0, 6, 9, 5, 0, 5, 6, 0, -1, -1, -1, -1},
    {0, 3, 8, 5, 6, 10, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {10, 5, 6, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {11, 5, 10, 7, 5, 11, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {11, 5, 10, 11, 7, 5, 8, 3, 0, -1, -1, -1, -1, -1, -1, -1},
    {5, 11, 7, 5, 10, 11, 1, 9, 0, -1, -1, -1, -1, -1, -1, -1},
    {10, 7, 5, 10, 11, 7, 9, 8, 1, 8, 3, 1, -1, -1, -1, -1},
    {11, 1, 2, 11, 7, 1, 7, 5, 1, -1, -1, -1, -1, -1, -1, -1},
    {0, 8, 3, 1, 2, 7, 1, 7, 5, 7, 2, 11, -1, -1, -1, -1},
    {9, 7, 5, 9, 2, 7, 9, 0, 2, 2, 11, 7, -1, -1, -1, -1},
    {7, 5, 2, 7, 2, 11, 5, 9, 2, 3, 2, 8, 9, 8, 2, -1},
    {2, 5, 10, 2, 3, 5, 3, 7, 5, -1, -1, -1, -1, -1, -1, -1},
    {8, 2, 0, 8, 5, 2, 8, 7, 5, 10, 2, 5, -1, -1, -1, -1},
    {9, 0, 1, 5, 10, 3, 5, 3, 7, 3, 10, 2, -1, -1, -1, -1},
    {9, 8, 2, 9, 2, 1, 8, 7, 2, 10, 2, 5, 7, 5, 2, -1},
    {1, 3, 5, 3, 7, 5, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {0, 8, 7, 0, 7, 1, 1, 7, 5, -1, -1, -1, -1, -1, -1, -1},
    {9, 0, 3, 9, 3, 5, 5, 3, 7, -1, -1, -1, -1, -1, -1, -1},
    {9, 8, 7, 5, 9, 7, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {5, 8, 4, 5, 10, 8, 10, 11, 8, -1, -1, -1, -1, -1, -1, -1},
    {5, 0, 4, 5, 11, 0, 5, 10, 11, 11, 3, 0, -1, -1, -1, -1},
    {0, 1, 9, 8, 4, 10, 8, 10, 11, 10, 4, 5, -1, -1, -1, -1},
    {10, 11, 4, 10, 4, 5, 11, 3, 4, 9, 4, 1, 3, 1, 4, -1},
    {2, 5, 1, 2, 8, 5, 2, 11, 8, 4, 5, 8, -1, -1, -1, -1},
    {0, 4, 11, 0, 11, 3, 4, 5, 11, 2, 11, 1, 5, 1, 11, -1},
    {0, 2, 5, 0, 5, 9, 2, 11, 5, 4, 5, 8, 11, 8, 5, -1},
    {9, 4, 5, 2, 11, 3, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {2, 5, 10, 3, 5, 2, 3, 4, 5, 3, 8, 4, -1, -1, -1, -1},
    {5, 10, 2, 5, 2, 4, 4, 2, 0, -1, -1, -1, -1, -1, -1, -1},
    {3, 10, 2, 3, 5, 10, 3, 8, 5, 4, 5, 8, 0, 1, 9, -1},
    {5, 10, 2, 5, 2, 4, 1, 9, 2, 9, 4, 2, -1, -1, -1, -1},
    {8, 4, 5, 8, 5, 3, 3, 5, 1, -1, -1, -1, -1, -1, -1, -1},
    {0, 4, 5, 1, 0, 5, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {8, 4, 5, 8, 5, 3, 9, 0, 5, 0, 3, 5, -1, -1, -1, -1},
    {9, 4, 5, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {4, 11, 7, 4, 9, 11, 9, 10, 11, -1, -1, -1, -1, -1, -1, -1},
    {0, 8, 3, 4, 9, 7, 9, 11, 7, 9, 10, 11, -1, -1, -1, -1},
    {1, 10, 11, 1, 11, 4, 1, 4, 0, 7, 4, 11, -1, -1, -1, -1},
    {3, 1, 4, 3, 4, 8, 1, 10, 4, 7, 4, 11, 10, 11, 4, -1},
    {4, 11, 7, 9, 11, 4, 9, 2, 11, 9, 1, 2, -1, -1, -1, -1},
    {9, 7, 4, 9, 11, 7, 9, 1, 11, 2, 11, 1, 0, 8, 3, -1},
    {11, 7, 4, 11, 4, 2, 2, 4, 0, -1, -1, -1, -1, -1, -1, -1},
    {11, 7, 4, 11, 4, 2, 8, 3, 4, 3, 2, 4, -1, -1, -1, -1},
    {2, 9, 10, 2, 7, 9, 2, 3, 7, 7, 4, 9, -1, -1, -1, -1},
    {9, 10, 7, 9, 7, 4, 10, 2, 7, 8, 7, 0, 2, 0, 7, -1},
    {3, 7, 10, 3, 10, 2, 7, 4, 10, 1, 10, 0, 4, 0, 10, -1},
    {1, 10, 2, 8, 7, 4, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {4, 9, 1, 4, 1, 7, 7, 1, 3, -1, -1, -1, -1, -1, -1, -1},
    {4, 9, 1, 4, 1, 7, 0, 8, 1, 8, 7, 1, -1, -1, -1, -1},
    {4, 0, 3, 7, 4, 3, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {4, 8, 7, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {9, 10, 8, 10, 11, 8, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {3, 0, 9, 3, 9, 11, 11, 9, 10, -1, -1, -1, -1, -1, -1, -1},
    {0, 1, 10, 0, 10, 8, 8, 10, 11, -1, -1, -1, -1, -1, -1, -1},
    {3, 1, 10, 11, 3, 10, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {1, 2, 11, 1, 11, 9, 9, 11, 8, -1, -1, -1, -1, -1, -1, -1},
    {3, 0, 9, 3, 9, 11, 1, 2, 9, 2, 11, 9, -1, -1, -1, -1},
    {0, 2, 11, 8, 0, 11, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {3, 2, 11, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {2, 3, 8, 2, 8, 10, 10, 8, 9, -1, -1, -1, -1, -1, -1, -1},
    {9, 10, 2, 0, 9, 2, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {2, 3, 8, 2, 8, 10, 0, 1, 8, 1, 10, 8, -1, -1, -1, -1},
    {1, 10, 2, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {1, 3, 8, 9, 1, 8, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {0, 9, 1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {0, 3, 8, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {-1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1}};

}  // namespace

TsdfVolume make_volume(const Vec3& lo, const Vec3& hi, int resolution) {
    require(resolution >= 2, "make_volume: resolution must be at least 2");
    Vec3 ext = hi - lo;
    require(ext.x > 0 && ext.y > 0 && ext.z > 0, "make_volume: bounds are empty");
    TsdfVolume v;
    v.voxel = std::max({ext.x, ext.y, ext.z}) / resolution;
    v.trunc = kTruncVoxels * v.voxel;
    v.nx = static_cast<int>(std::ceil(ext.x / v.voxel)) + 1;
    v.ny = static_cast<int>(std::ceil(ext.y / v.voxel)) + 1;
    v.nz = static_cast<int>(std::ceil(ext.z / v.voxel)) + 1;
    v.origin = lo;
    std::size_t n = static_cast<std::size_t>(v.nx) * v.ny * v.nz;
    v.tsdf.assign(n, 1.0);
    v.weight.assign(n, 0.0);
    v.rgb.assign(3 * n, 0.0);
    return v;
}

void integrate(TsdfVolume& vol, const Camera& cam, const Image& depth, const Image& color,
               const Image& alpha) {
    require(depth.channels == 1 && alpha.channels == 1 && color.channels == 3,
            "integrate: expected 1-channel depth/alpha and 3-channel color");
    require(depth.width == cam.width && depth.height == cam.height &&
                alpha.width == cam.width && alpha.height == cam.height &&
                color.width == cam.width && color.height == cam.height,
            "integrate: image sizes do not match the camera");
    // One z-slab per chunk; every voxel belongs to exactly one slab, so all
    // writes are disjoint and the result is thread-count independent.
    parallel_chunks(vol.nz, 1, [&](std::int64_t, std::int64_t zb, std::int64_t ze) {
        for (int z = static_cast<int>(zb); z < static_cast<int>(ze); ++z)
            for (int y = 0; y < vol.ny; ++y)
                for (int x = 0; x < vol.nx; ++x) {
                    Vec3 c = cam.to_camera(vol.voxel_center(x, y, z));
                    if (c.z <= 0) continue;
                    real px = cam.fx * c.x / c.z + cam.cx;
                    real py = cam.fy * c.y / c.z + cam.cy;
                    int ix = static_cast<int>(std::floor(px));
                    int iy = static_cast<int>(std::floor(py));
                    if (ix < 0 || ix >= cam.width || iy < 0 || iy >= cam.height) continue;
                    if (alpha.at(ix, iy, 0) < kAlphaGate) continue;
                    real d = depth.at(ix, iy, 0);
                    if (d <= 0) continue;
                    real sdf = d - c.z;  // front-positive along the optical axis
                    if (sdf < -vol.trunc) continue;  // hidden well behind the surface
                    real t = std::clamp(sdf / vol.trunc, real(-1), real(1));
                    std::size_t i = vol.index(x, y, z);
                    real w0 = vol.weight[i];
                    vol.tsdf[i] = (vol.tsdf[i] * w0 + t) / (w0 + 1);
                    for (int ch = 0; ch < 3; ++ch)
                        vol.rgb[3 * i + ch] =
                            (vol.rgb[3 * i + ch] * w0 + color.at(ix, iy, ch)) / (w0 + 1);
                    vol.weight[i] = w0 + 1;
                }
    });
}

void integrate(TsdfVolume& vol, const Camera& cam, const RenderBuffers& buf) {
    Image depth(buf.width, buf.height, 1), color(buf.width, buf.height, 3),
        alpha(buf.width, buf.height, 1);
    for (int y = 0; y < buf.height; ++y)
        for (int x = 0; x < buf.width; ++x) {
            std::size_t p = static_cast<std::size_t>(y) * buf.width + x;
            depth.at(x, y, 0) = buf.depth[p];
            alpha.at(x, y, 0) = buf.alpha[p];
            for (int ch = 0; ch < 3; ++ch) color.at(x, y, ch) = buf.color[3 * p + ch];
        }
    integrate(vol, cam, depth, color, alpha);
}

TriangleMesh extract(const TsdfVolume& vol) {
    require(vol.nx >= 2 && vol.ny >= 2 && vol.nz >= 2, "extract: volume too small");
    const int cx = vol.nx - 1, cy = vol.ny - 1, cz = vol.nz - 1;
    const std::int64_t n_cells = static_cast<std::int64_t>(cx) * cy * cz;

    // Pass 1 (parallel): classify each cell. Cells touching unobserved
    // voxels are treated as empty so the surface only spans observed space.
    std::vector<std::uint8_t> config(static_cast<std::size_t>(n_cells), 0);
    parallel_chunks(n_cells, 4096, [&](std::int64_t, std::int64_t b, std::int64_t e) {
        for (std::int64_t cell = b; cell < e; ++cell) {
            int x = static_cast<int>(cell % cx);
            int y = static_cast<int>((cell / cx) % cy);
            int z = static_cast<int>(cell / (static_cast<std::int64_t>(cx) * cy));
            unsigned idx = 0;
            bool observed = true;
            for (int k = 0; k < 8; ++k) {
                std::size_t vi =
                    vol.index(x + kCornerOff[k][0], y + kCornerOff[k][1], z + kCornerOff[k][2]);
                if (vol.weight[vi] <= 0) {
                    observed = false;
                    break;
                }
                if (vol.tsdf[vi] < 0) idx |= 1u << k;
            }
            config[static_cast<std::size_t>(cell)] = observed ? static_cast<std::uint8_t>(idx) : 0;
        }
    });

    // Pass 2 (serial, cell order): emit vertices and triangles. Vertices are
    // deduplicated by the grid edge they sit on, which stitches neighboring
    // cells together and fixes the ordering.
    TriangleMesh mesh;
    std::unordered_map<std::uint64_t, std::int32_t> edge_vertex;
    auto vertex_on_edge = [&](int x, int y, int z, int e) -> std::int32_t {
        const int a = kEdgeCorner[e][0], b = kEdgeCorner[e][1];
        int ax = kCornerOff[a][0] != kCornerOff[b][0]
                     ? 0
                     : (kCornerOff[a][1] != kCornerOff[b][1] ? 1 : 2);
        const int* lo = kCornerOff[a][ax] <= kCornerOff[b][ax] ? kCornerOff[a] : kCornerOff[b];
        std::uint64_t key =
            static_cast<std::uint64_t>(vol.index(x + lo[0], y + lo[1], z + lo[2])) * 3 + ax;
        auto it = edge_vertex.find(key);
        if (it != edge_vertex.end()) return it->second;

        std::size_t ia = vol.index(x + kCornerOff[a][0], y + kCornerOff[a][1],
                                   z + kCornerOff[a][2]);
        std::size_t ib = vol.index(x + kCornerOff[b][0], y + kCornerOff[b][1],
                                   z + kCornerOff[b][2]);
        real va = vol.tsdf[ia], vb = vol.tsdf[ib];
        real tt = std::abs(vb - va) < 1e-12 ? real(0.5)
                                            : std::clamp((0 - va) / (vb - va), real(0), real(1));
        Vec3 pa = vol.voxel_center(x + kCornerOff[a][0], y + kCornerOff[a][1],
                                   z + kCornerOff[a][2]);
        Vec3 pb = vol.voxel_center(x + kCornerOff[b][0], y + kCornerOff[b][1],
                                   z + kCornerOff[b][2]);
        Vec3 col{vol.rgb[3 * ia + 0] + (vol.rgb[3 * ib + 0] - vol.rgb[3 * ia + 0]) * tt,
                 vol.rgb[3 * ia + 1] + (vol.rgb[3 * ib + 1] - vol.rgb[3 * ia + 1]) * tt,
                 vol.rgb[3 * ia + 2] + (vol.rgb[3 * ib + 2] - vol.rgb[3 * ia + 2]) * tt};
        std::int32_t id = static_cast<std::int32_t>(mesh.vertices.size());
        mesh.vertices.push_back(pa + (pb - pa) * tt);
        mesh.colors.push_back(col);
        edge_vertex.emplace(key, id);
        return id;
    };

    for (std::int64_t cell = 0; cell < n_cells; ++cell) {
        const std::int8_t* tris = kTriTable[config[static_cast<std::size_t>(cell)]];
        if (tris[0] < 0) continue;
        int x = static_cast<int>(cell % cx);
        int y = static_cast<int>((cell / cx) % cy);
        int z = static_cast<int>(cell / (static_cast<std::int64_t>(cx) * cy));
        for (int k = 0; tris[k] >= 0; k += 3) {
            std::int32_t i0 = vertex_on_edge(x, y, z, tris[k]);
            std::int32_t i1 = vertex_on_edge(x, y, z, tris[k + 1]);
            std::int32_t i2 = vertex_on_edge(x, y, z, tris[k + 2]);
            if (i0 == i1 || i1 == i2 || i0 == i2) continue;  // collapsed by interpolation
            Vec3 ab = mesh.vertices[i1] - mesh.vertices[i0];
            Vec3 ac = mesh.vertices[i2] - mesh.vertices[i0];
            if (dot(cross(ab, ac), cross(ab, ac)) <= 0) continue;  // zero area
            mesh.triangles.push_back({i0, i1, i2});
        }
    }
    if (mesh.triangles.empty()) throw EmptySurface("extract: volume has no zero crossing");

    // Interpolation can collapse a vertex onto a corner shared by several
    // edges; dropping the degenerate triangles may leave those vertices
    // unreferenced, so compact the arrays.
    std::vector<std::int32_t> remap(mesh.vertices.size(), -1);
    TriangleMesh out;
    for (auto& tri : mesh.triangles) {
        for (int k = 0; k < 3; ++k) {
            std::int32_t& v = tri[k];
            if (remap[v] < 0) {
                remap[v] = static_cast<std::int32_t>(out.vertices.size());
                out.vertices.push_back(mesh.vertices[v]);
                out.colors.push_back(mesh.colors[v]);
            }
            v = remap[v];
        }
        out.triangles.push_back(tri);
    }
    return out;
}

TriangleMesh mesh_snapshot(const DeformedSnapshot& snap, const std::vector<Camera>& cams,
                           const Vec3& lo, const Vec3& hi, int resolution) {
    require(!cams.empty(), "mesh_snapshot: no cameras");
    TsdfVolume vol = make_volume(lo, hi, resolution);
    for (const Camera& cam : cams) integrate(vol, cam, render(cam, snap));
    return extract(vol);
}

void write_ply(const TriangleMesh& mesh, const std::string& path) {
    for (const auto& tri : mesh.triangles)
        for (int k = 0; k < 3; ++k)
            require(tri[k] >= 0 && tri[k] < static_cast<std::int32_t>(mesh.vertices.size()),
                    "write_ply: triangle index out of range");
    require(mesh.colors.size() == mesh.vertices.size(),
            "write_ply: vertex/color count mismatch");
    std::ofstream out(path);
    if (!out) throw MissingArtifact("write_ply: cannot open " + path);
    out << "ply\nformat ascii 1.0\n";
    out << "element vertex " << mesh.vertices.size() << "\n";
    out << "property float x\nproperty float y\nproperty float z\n";
    out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    out << "element face " << mesh.triangles.size() << "\n";
    out << "property list uchar int vertex_indices\n";
    out << "end_header\n";
    out.precision(9);
    auto byte = [](real c) {
        return static_cast<int>(std::lround(std::clamp(c, real(0), real(1)) * 255));
    };
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
        const Vec3& p = mesh.vertices[i];
        const Vec3& c = mesh.colors[i];
        out << p.x << ' ' << p.y << ' ' << p.z << ' ' << byte(c.x) << ' ' << byte(c.y) << ' '
            << byte(c.z) << '\n';
    }
    for (const auto& tri : mesh.triangles)
        out << "3 " << tri[0] << ' ' << tri[1] << ' ' << tri[2] << '\n';
    require(out.good(), "write_ply: write failed for " + path);
}

TriangleMesh read_ply(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingArtifact("read_ply: cannot open " + path);
    auto fail = [&](const std::string& why) -> ProtocolError {
        return ProtocolError("read_ply: " + why + " in " + path);
    };
    std::string line;
    auto next_line = [&]() {
        do {
            if (!std::getline(in, line)) throw fail("truncated header");
        } while (line.rfind("comment", 0) == 0);
        return line;
    };
    if (next_line() != "ply") throw fail("missing ply magic");
    if (next_line() != "format ascii 1.0") throw fail("unsupported format");
    std::size_t n_vertex = 0, n_face = 0;
    {
        std::istringstream h(next_line());
        std::string w0, w1;
        h >> w0 >> w1 >> n_vertex;
        if (w0 != "element" || w1 != "vertex" || h.fail()) throw fail("expected vertex element");
    }
    for (const char* prop : {"property float x", "property float y", "property float z",
                             "property uchar red", "property uchar green", "property uchar blue"})
        if (next_line() != prop) throw fail("unexpected vertex property layout");
    {
        std::istringstream h(next_line());
        std::string w0, w1;
        h >> w0 >> w1 >> n_face;
        if (w0 != "element" || w1 != "face" || h.fail()) throw fail("expected face element");
    }
    if (next_line().rfind("property list", 0) != 0) throw fail("expected face list property");
    if (next_line() != "end_header") throw fail("expected end_header");

    TriangleMesh mesh;
    mesh.vertices.reserve(n_vertex);
    mesh.colors.reserve(n_vertex);
    for (std::size_t i = 0; i < n_vertex; ++i) {
        if (!std::getline(in, line)) throw fail("truncated vertex list");
        std::istringstream v(line);
        Vec3 p;
        int r, g, b;
        v >> p.x >> p.y >> p.z >> r >> g >> b;
        if (v.fail()) throw fail("malformed vertex line");
        mesh.vertices.push_back(p);
        mesh.colors.push_back({r / real(255), g / real(255), b / real(255)});
    }
    mesh.triangles.reserve(n_face);
    for (std::size_t i = 0; i < n_face; ++i) {
        if (!std::getline(in, line)) throw fail("truncated face list");
        std::istringstream f(line);
        int count = 0;
        std::array<std::int32_t, 3> tri{};
        f >> count >> tri[0] >> tri[1] >> tri[2];
        if (f.fail() || count != 3) throw fail("only triangle faces are supported");
        for (int k = 0; k < 3; ++k)
            if (tri[k] < 0 || tri[k] >= static_cast<std::int32_t>(mesh.vertices.size()))
                throw fail("face index out of range");
        mesh.triangles.push_back(tri);
    }
    return mesh;
}

}  // namespace sf
