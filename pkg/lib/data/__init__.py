from .io import (
    FRAME_SIZE,
    SPLITS,
    DatasetManifest,
    TactileDataset,
    TactileFrame,
    load_dataset,
    read_frames,
    save_dataset,
    split_directory,
    write_frames,
)
from .preprocess import baseline_subtract, filter_dataset, filter_informative, informative_mask
from .clustering import ClusterAssignment, cluster_dataset, cluster_frames, read_clusters, write_clusters
from .views import ViewSample, ViewSetSampler, sample_unclustered_view_set, sample_view_set
from .synth import ClassTemplate, class_templates, synth_generate
from .stag import convert_stag
