from .visualize import plot_confusion_matrix, plot_view_graph
