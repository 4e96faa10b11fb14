#pragma once

#include "broken_sample/assignment.hpp"
#include "broken_sample/asymptotics.hpp"
#include "broken_sample/detectors.hpp"
#include "broken_sample/errors.hpp"
#include "broken_sample/harness.hpp"
#include "broken_sample/histogram.hpp"
#include "broken_sample/io.hpp"
#include "broken_sample/models.hpp"
#include "broken_sample/normal.hpp"
#include "broken_sample/parallel.hpp"
#include "broken_sample/points.hpp"
#include "broken_sample/rng.hpp"
#include "broken_sample/second_moment.hpp"
#include "broken_sample/spectrum.hpp"
