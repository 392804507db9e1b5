#pragma once

#include "cyclecert/attraction.hpp"
#include "cyclecert/config.hpp"
#include "cyclecert/constants.hpp"
#include "cyclecert/errors.hpp"
#include "cyclecert/euler.hpp"
#include "cyclecert/existence.hpp"
#include "cyclecert/expression.hpp"
#include "cyclecert/geometry.hpp"
#include "cyclecert/parallel.hpp"
#include "cyclecert/report.hpp"
#include "cyclecert/sync_error.hpp"
#include "cyclecert/transverse.hpp"
#include "cyclecert/tube.hpp"
#include "cyclecert/vector_field.hpp"
