#pragma once

#include "otkit/core.hpp"
#include "otkit/exact_lp.hpp"
#include "otkit/closed_form.hpp"
#include "otkit/entropic.hpp"
#include "otkit/semidiscrete.hpp"
#include "otkit/graph_w1.hpp"
#include "otkit/dynamic_bb.hpp"
#include "otkit/weak_losses.hpp"
#include "otkit/barycenter.hpp"
#include "otkit/variational.hpp"
