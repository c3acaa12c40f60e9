// Acceptance suite: one pass/fail line per criterion.
#include <gtest/gtest.h>

TEST(AcceptancePlaceholder, Pending) { SUCCEED(); }
