// Umbrella header.

#pragma once

#include "typobench/attacks.hpp"
#include "typobench/cli.hpp"
#include "typobench/compositor.hpp"
#include "typobench/config.hpp"
#include "typobench/corpus.hpp"
#include "typobench/evaluator.hpp"
#include "typobench/gateway.hpp"
#include "typobench/gateway_http.hpp"
#include "typobench/image.hpp"
#include "typobench/prompts.hpp"
#include "typobench/report.hpp"
