"""Stand-off linguistic annotation toolkit.

The modules build on each other: ``anchors`` (primary data and regions),
``graph`` (the annotation document), ``dump`` (the line-oriented pivot
serialization), ``dcr`` (data category registry and scheme mappings),
``transducers`` (legacy formats), ``layerops`` (merge, extract, diff and
validation) and ``cli`` (the ``laf`` command).
"""

__version__ = "0.1.0"
