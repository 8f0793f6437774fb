#include "grouprank/grouprank.hpp"
int main() { return 0; }
