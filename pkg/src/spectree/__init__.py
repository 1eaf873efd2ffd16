"""spectree: long-term tree motion as sparse voxel spectra.

Dense mesh motion is compressed to a handful of temporal DFT bins per
occupied voxel, reconstructed on demand, used to drive surface-bound
Gaussian primitives, and reused as modal bases for real-time force
response.
"""

from .errors import DataError, EngineError, SpectreeError
from .meshio import Aabb, MotionSequence, TriMesh, knn, load_mesh, save_mesh
from .modal import (ForceEvent, ModalBank, ModalState, build_bank,
                    project_force, step, superpose)
from .spectrum import (LssConfig, SparseVoxelSpectrum, fft_compress,
                       hf_energy_ratio, load_motion, load_spectrum,
                       lss_metric, reconstruct_motion, save_motion,
                       save_spectrum, smooth_spectrum)
from .splat import GaussianCloud, SplatPose, bind, deform_deltas, export_splats, pose
from .synth import (BranchSkeleton, Gust, SynthParams, WindField, curate,
                    grow_tree, simulate_wind, skin_motion)
from .voxel import (SparseVoxelGrid, VoxelMotion, build_grid, devoxelize,
                    voxelize_motion)

__version__ = "0.1.0"
