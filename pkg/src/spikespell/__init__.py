"""Event-driven ASL fingerspelling recognition.

Synthesize or ingest event-camera streams, localize the signing hand with
a spiking proto-object saliency model, classify 24 static letters with a
compact three-layer spiking network, and report accuracy, latency and
energy under a neuromorphic-hardware emulation model.
"""

from .dvs import DvsConfig, convert_image_to_events
from .events import Event, EventFrame, EventStream, SpikeRaster
from .network import LifParamsTrain, NetworkWeights, classify, forward
from .saliency import FilterBank, Roi, SaliencyMap, VmKernel

__version__ = "0.1.0"

__all__ = [
    "DvsConfig",
    "Event",
    "EventFrame",
    "EventStream",
    "FilterBank",
    "LifParamsTrain",
    "NetworkWeights",
    "Roi",
    "SaliencyMap",
    "SpikeRaster",
    "VmKernel",
    "classify",
    "convert_image_to_events",
    "forward",
    "__version__",
]
