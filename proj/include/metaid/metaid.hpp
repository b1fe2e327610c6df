#pragma once

#include "metaid/error.hpp"
#include "metaid/eval.hpp"
#include "metaid/ingest.hpp"
#include "metaid/learn.hpp"
#include "metaid/model.hpp"
#include "metaid/privacy.hpp"
#include "metaid/random.hpp"
#include "metaid/scale.hpp"
#include "metaid/select.hpp"
#include "metaid/synth.hpp"
