"""Exception hierarchy shared by every pipeline stage."""


class WeakVidError(Exception):
    """Base class; the CLI maps it to exit code 1."""

    module = "weakvid"

    def __str__(self):
        return f"{self.module}: {super().__str__()}"


# ingest
class IngestError(WeakVidError, ValueError):
    module = "ingest"


class MalformedLine(IngestError):
    def __init__(self, line_no, reason=""):
        self.line_no = line_no
        super().__init__(f"malformed line {line_no}" + (f": {reason}" if reason else ""))


class ScoreOutOfRange(IngestError):
    pass


class NonPositiveBox(IngestError):
    pass


class MixedVideos(IngestError):
    pass


class ManifestError(IngestError):
    pass


# datasetgen
class DatasetError(WeakVidError, ValueError):
    module = "datasetgen"


class UnknownVideo(DatasetError):
    def __init__(self, video_id):
        self.video_id = video_id
        super().__init__(f"detection references unknown video {video_id!r}")


# splitting
class SplitError(WeakVidError, ValueError):
    module = "splitting"


class TooFewSamples(SplitError):
    pass


# features
class FeatureError(WeakVidError, ValueError):
    module = "features"


class ZeroMass(FeatureError):
    pass


class DegenerateImage(FeatureError):
    pass


class NotColor(FeatureError):
    pass


class ImageLoadError(WeakVidError, OSError):
    module = "features"


# classic_ml
class ClassifierError(WeakVidError, ValueError):
    module = "classic_ml"


class SingleClass(ClassifierError):
    pass


class DimensionMismatch(ClassifierError):
    pass


class NonFiniteFeature(ClassifierError):
    pass


class InvalidSpec(ClassifierError):
    pass


# neural
class NeuralError(WeakVidError, ValueError):
    module = "neural"


class EmptyTrainingSet(NeuralError):
    pass


class LabelOutOfRange(NeuralError):
    pass


class NonFiniteLoss(NeuralError, ArithmeticError):
    pass


# eval_report
class ReportError(WeakVidError, ValueError):
    module = "eval_report"


class LengthMismatch(ReportError):
    pass


class UnknownLabel(ReportError):
    pass


class EmptyMatrix(ReportError):
    pass


# synth
class SynthError(WeakVidError, ValueError):
    module = "synth"


class InvalidConfig(SynthError):
    pass


class DiskWrite(SynthError, OSError):
    pass
