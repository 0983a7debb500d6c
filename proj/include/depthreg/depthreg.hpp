#pragma once

#include "depthreg/depth_map.hpp"
#include "depthreg/error.hpp"
#include "depthreg/eval.hpp"
#include "depthreg/geometry.hpp"
#include "depthreg/io.hpp"
#include "depthreg/jacobian_check.hpp"
#include "depthreg/numeric.hpp"
#include "depthreg/point_cloud.hpp"
#include "depthreg/problem.hpp"
#include "depthreg/registration.hpp"
#include "depthreg/solver.hpp"
#include "depthreg/synth.hpp"
