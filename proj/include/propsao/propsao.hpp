#pragma once

#include "propsao/common.hpp"
#include "propsao/config.hpp"
#include "propsao/dataset.hpp"
#include "propsao/design_space.hpp"
#include "propsao/hydro.hpp"
#include "propsao/optimizer.hpp"
#include "propsao/surrogate.hpp"
