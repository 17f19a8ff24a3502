"""Person-context personality recognition from multi-subject skeleton streams.

Pipeline stages: pose parsing/repair/tracking/windowing (pose), cylindrical
motion and proxemics descriptors (descriptors, regions), quantization and a
frozen seeded convolutional feature extractor (backbone), stream fusion and
softmax heads with class activation maps (fusion), label derivation and
evaluation protocols (labels), synthetic scenes with planted structure
(synth), and orchestration (pipeline, cli).
"""

from .backbone import (BackboneModel, CalibrationRange, FeatureMaps,
                       QuantizedClipImage, backbone_forward, bilinear_resize,
                       fit_calibration, quantize_and_resize, temporal_mean_pool)
from .config import RunConfig, load_config
from .descriptors import (CylTriple, DescriptorTensor, cylindrical,
                          group_average_pool, group_max_pool,
                          person_descriptor, social_proxemics)
from .errors import (ConfigError, DataError, ModelError, PerceptError,
                     PoseParseError, PoseSchemaError, UnimputableError)
from .fusion import (FeatureBundle, HeadModel, LinearCamHead, PcaTransform,
                     cam, cam_head_train, decision_fuse_sum, fuse_concat,
                     head_predict, head_train, pca_fit, pca_inverse,
                     pca_transform, quartile_quantize)
from .labels import (TraitScores, cluster_types, kfold_split, loso_split,
                     median_binarize, name_types, normalize_traits, significance)
from .pose import (GroupAssignment, PoseClip, PoseFrame, Skeleton,
                   associate_tracks, impute_missing_joints, parse_group_file,
                   parse_pose_stream, serialize_pose_stream, window)
from .regions import (GmmModel, PatchGrid, SceneRegions, TrackletHistogram,
                      arm_motion_features, fit_gmm, nonsocial_proxemics,
                      region_centers)
from .synth import SynthScene, TypeProfile, generate_scene, load_profiles

__version__ = "0.1.0"
