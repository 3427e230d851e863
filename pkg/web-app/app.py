import logging
import sys
import tempfile
from pathlib import Path

import numpy as np
import streamlit as st

sys.path.append(str(Path(__file__).resolve().parents[1]))

from src.checkpoint import load_checkpoint
from src.config import GradPath
from src.data import load_input
from src.errors import CheckpointFormatError, DatasetFormatError, InvalidClassError, ShapeMismatchError
from src.qgradcam import explain, overlay_image
from src.imaging import apply_colormap
from utils.utils import LOG_FORMAT, load_environment_variables

logging.basicConfig(level=logging.INFO, format=LOG_FORMAT)
load_environment_variables()

# Page config
st.set_page_config(
    page_title="Quantum Grad-CAM Viewer",
    page_icon="🔬",
    layout="wide"
)

if "model" not in st.session_state:
    st.session_state.model = None
if "checkpoint_path" not in st.session_state:
    st.session_state.checkpoint_path = ""

st.title("🔬 Quantum Grad-CAM Viewer")

# Sidebar with model controls
with st.sidebar:
    st.header("Model")
    checkpoint_path = st.text_input("Checkpoint path", value=st.session_state.checkpoint_path or "runs/model.qgcm")
    if st.button("Load checkpoint"):
        try:
            st.session_state.model = load_checkpoint(checkpoint_path)
            st.session_state.checkpoint_path = checkpoint_path
            logging.info(f"Viewer loaded {checkpoint_path}")
        except CheckpointFormatError as e:
            st.session_state.model = None
            st.error(str(e))

    model = st.session_state.model
    grad_path = st.radio("Gradient path", [path.value for path in GradPath], horizontal=True)
    class_options = ["predicted"]
    if model is not None:
        class_options += [str(label) for label in range(1, model.num_classes + 1)]
        _, height, width = model.spec.input_shape
        st.caption(f"{model.spec.circuit.n} qubits, {model.spec.circuit.blocks} blocks, input {height}x{width}")
    class_choice = st.selectbox("Explain class", class_options)

if st.session_state.model is None:
    st.info("Load a checkpoint from the sidebar to start.")
    st.stop()

uploaded = st.file_uploader("Input image, .npy array or 16 kHz WAV", type=["png", "pgm", "jpg", "jpeg", "npy", "wav"])
if uploaded is None:
    st.stop()

model = st.session_state.model
_, height, width = model.spec.input_shape
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / uploaded.name
    path.write_bytes(uploaded.getvalue())
    try:
        image = load_input(path, (height, width))
        class_label = None if class_choice == "predicted" else int(class_choice)
        with st.spinner("Computing gradients through the circuit..."):
            explanation = explain(model, image, class_label, grad_path)
    except (DatasetFormatError, ShapeMismatchError, InvalidClassError) as e:
        st.error(str(e))
        st.stop()

heat = explanation.heatmap.upsampled
st.subheader(f"Predicted class {explanation.predicted}, explaining class {explanation.class_label}")
st.bar_chart({"score": {str(label): float(s) for label, s in enumerate(explanation.scores, start=1)}})

left, middle, right = st.columns(3)
left.image(np.clip(image, 0.0, 1.0), caption="Input", clamp=True, use_container_width=True)
middle.image(apply_colormap(heat), caption="Heatmap", use_container_width=True)
right.image(overlay_image(image, heat), caption="Overlay (50% alpha)", use_container_width=True)

with st.expander("Channel weights"):
    st.bar_chart({"weight": {str(k): float(w) for k, w in enumerate(explanation.weights.weights, start=1)}})
