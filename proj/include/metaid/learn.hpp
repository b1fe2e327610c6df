#pragma once

#include "metaid/learn/classifier.hpp"
#include "metaid/learn/forest.hpp"
#include "metaid/learn/knn.hpp"
#include "metaid/learn/lbfgs.hpp"
#include "metaid/learn/mlr.hpp"
#include "metaid/learn/types.hpp"
