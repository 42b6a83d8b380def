"""motifmine: mine recurring visual motifs from image corpora.

Pipeline: descriptors -> IVF-PQ index -> similarity graph -> component
connection -> clustering -> motif report, plus an annotation protocol for
measuring cluster quality and a small HTTP service for review.
"""

__version__ = "0.1.0"
