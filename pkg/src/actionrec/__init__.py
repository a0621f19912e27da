"""Still-image action recognition through latent superpixel classes.

Pipeline: ``segmentation`` over-segments an image, ``descriptors`` builds a
451-D vector per superpixel, ``detector`` turns it into class posteriors,
and ``structmodel`` jointly infers superpixel states and a binary action
label with a latent structural SVM.
"""

from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
