#include <gtest/gtest.h>

#include "mpt/gradcheck.hpp"

using namespace mpt;

// Spot checks on the finite-difference oracle; the full registry at higher
// trial counts runs in the acceptance suite.

TEST(Gradcheck, MatmulTenTrials) {
    gradcheck_suite suite;
    auto res = suite.check("matmul", 10, 2028);
    EXPECT_TRUE(res.pass) << "max rel err " << res.max_rel_err;
    EXPECT_LT(res.max_rel_err, 1e-4);
}

TEST(Gradcheck, Conv2d) {
    gradcheck_suite suite;
    auto res = suite.check("conv2d", 3, 2029);
    EXPECT_TRUE(res.pass) << "max rel err " << res.max_rel_err;
}

TEST(Gradcheck, MsaBlock) {
    gradcheck_suite suite;
    auto res = suite.check("msa_block", 3, 2030);
    EXPECT_TRUE(res.pass) << "max rel err " << res.max_rel_err;
}

TEST(Gradcheck, UnknownOpThrows) {
    gradcheck_suite suite;
    EXPECT_THROW(suite.check("not_an_op", 1, 0), config_error);
}

TEST(Gradcheck, EveryRegisteredOpPassesOneTrial) {
    gradcheck_suite suite;
    for (const auto& res : suite.check_all(1, 77)) {
        EXPECT_TRUE(res.pass) << res.op << " max rel err " << res.max_rel_err;
    }
}
