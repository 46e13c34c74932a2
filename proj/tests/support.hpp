#pragma once

#include <gtest/gtest.h>

#include "gmmvs/errors.hpp"

#define EXPECT_ERROR_KIND(statement, expected_kind)                                   \
    do {                                                                              \
        try {                                                                         \
            statement;                                                                \
            ADD_FAILURE() << "expected " << gmmvs::to_string(expected_kind);          \
        } catch (const gmmvs::Error& e) {                                             \
            EXPECT_EQ(e.kind(), expected_kind) << e.what();                           \
        }                                                                             \
    } while (0)
