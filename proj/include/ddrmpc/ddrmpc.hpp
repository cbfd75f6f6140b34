#pragma once

#include "ddrmpc/common.hpp"
#include "ddrmpc/random.hpp"
#include "ddrmpc/lti.hpp"
#include "ddrmpc/hankel.hpp"
#include "ddrmpc/qp.hpp"
#include "ddrmpc/ddmpc.hpp"
#include "ddrmpc/dos.hpp"
#include "ddrmpc/controller.hpp"
#include "ddrmpc/io.hpp"
#include "ddrmpc/harness.hpp"
