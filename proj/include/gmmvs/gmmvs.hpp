#pragma once

#include "gmmvs/errors.hpp"
#include "gmmvs/seeding.hpp"
#include "gmmvs/parallel.hpp"
#include "gmmvs/dataset.hpp"
#include "gmmvs/kmeans.hpp"
#include "gmmvs/mixture.hpp"
#include "gmmvs/regression.hpp"
#include "gmmvs/selection.hpp"
#include "gmmvs/evaluation.hpp"
#include "gmmvs/simulation.hpp"
#include "gmmvs/serialize.hpp"
