#pragma once

#include <vector>

#include "hopose/geometry.hpp"
#include "hopose/raster.hpp"
#include "hopose/rigidpose.hpp"

namespace hopose {

/// One frame of ground truth: hand joints and object box points in the camera
/// frame, class labels, and the rendered image.
struct SceneFrame {
  int frame_id = 0;
  int sequence_id = -1;
  int action = 0;
  int object_class = 0;
  ControlPointSet hand{PointRole::Hand, {}};
  Pose6D object_pose;
  Cuboid cuboid;
  ControlPointSet object{PointRole::Object, {}};
  Raster raster;
};

struct FrameSequence {
  int sequence_id = 0;
  int action = 0;
  int object_class = 0;
  int interaction = 0;
  std::vector<SceneFrame> frames;
};

}  // namespace hopose
