#pragma once

#include "cmid/errors.hpp"
#include "cmid/linalg.hpp"
#include "cmid/kron.hpp"
#include "cmid/model.hpp"
#include "cmid/excitation.hpp"
#include "cmid/spectral.hpp"
#include "cmid/harmonics.hpp"
#include "cmid/fds.hpp"
#include "cmid/cm.hpp"
#include "cmid/metrics.hpp"
#include "cmid/harness.hpp"
