#pragma once

#include "cglo/autograd.hpp"
#include "cglo/config.hpp"
#include "cglo/error.hpp"
#include "cglo/fixture.hpp"
#include "cglo/generator.hpp"
#include "cglo/gradcheck.hpp"
#include "cglo/io.hpp"
#include "cglo/ops.hpp"
#include "cglo/synthesis.hpp"
#include "cglo/tensor.hpp"
#include "cglo/trainer.hpp"
