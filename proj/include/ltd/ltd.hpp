#pragma once

#include "ltd/core.hpp"
#include "ltd/random.hpp"
#include "ltd/probe_engine.hpp"
#include "ltd/netsim.hpp"
#include "ltd/rate_search.hpp"
#include "ltd/features.hpp"
#include "ltd/signatures.hpp"
#include "ltd/classifier.hpp"
#include "ltd/dataset.hpp"
#include "ltd/resolver.hpp"
#include "ltd/evalkit.hpp"
#include "ltd/icmp.hpp"
#include "ltd/raw_socket.hpp"
