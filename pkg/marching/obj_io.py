"""
Текстовый OBJ: строки "v x y z" и "f i j k" (индексы с единицы).
"""
import io
from pathlib import Path
from typing import List, TextIO, Union

import numpy as np

from marching.cubes import TriMesh
from utils.errors import ObjParseError
from utils.logger import get_logger

logger = get_logger(__name__)

PathOrStream = Union[str, Path, TextIO]

# Ключи OBJ, которые пропускаются при чтении
IGNORED_KEYS = {"vn", "vt", "o", "g", "s", "usemtl", "mtllib", "l"}


def export_obj(mesh: TriMesh, sink: PathOrStream) -> None:
    """
    Пишет сетку в OBJ; координаты с 9 значащими цифрами.

    Args:
        mesh: Сетка
        sink: Путь или текстовый поток
    """
    lines = [f"v {x:.9g} {y:.9g} {z:.9g}" for x, y, z in mesh.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces]
    text = "\n".join(lines) + ("\n" if lines else "")
    if isinstance(sink, (str, Path)):
        Path(sink).write_text(text, encoding="utf-8")
        logger.info(f"OBJ записан: {sink} ({mesh.num_vertices} вершин, {mesh.num_faces} граней)")
    else:
        sink.write(text)


def _face_index(token: str, num_vertices: int, line_number: int) -> int:
    raw = token.split("/")[0]
    try:
        index = int(raw)
    except ValueError:
        raise ObjParseError(line_number, f"индекс вершины не целое число: {token!r}")
    if index == 0:
        raise ObjParseError(line_number, "индекс 0 недопустим (индексы OBJ начинаются с 1)")
    # Отрицательные индексы считаются от конца уже прочитанных вершин
    resolved = index - 1 if index > 0 else num_vertices + index
    if not 0 <= resolved < num_vertices:
        raise ObjParseError(line_number, f"индекс {index} вне диапазона 1..{num_vertices}")
    return resolved


def import_obj(source: PathOrStream) -> TriMesh:
    """
    Читает OBJ. Многоугольные грани разбиваются веером на треугольники.

    Raises:
        ObjParseError: с номером строки для любой некорректной строки
    """
    if isinstance(source, (str, Path)):
        stream: TextIO = io.StringIO(Path(source).read_text(encoding="utf-8"))
    else:
        stream = source

    vertices: List[List[float]] = []
    faces: List[List[int]] = []
    for line_number, line in enumerate(stream, start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        key, *tokens = stripped.split()
        if key == "v":
            if len(tokens) < 3:
                raise ObjParseError(line_number, "у вершины меньше трех координат")
            try:
                vertices.append([float(t) for t in tokens[:3]])
            except ValueError:
                raise ObjParseError(line_number, f"координаты не числа: {tokens[:3]}")
        elif key == "f":
            if len(tokens) < 3:
                raise ObjParseError(line_number, "у грани меньше трех вершин")
            corners = [_face_index(t, len(vertices), line_number) for t in tokens]
            for k in range(1, len(corners) - 1):
                faces.append([corners[0], corners[k], corners[k + 1]])
        elif key not in IGNORED_KEYS:
            raise ObjParseError(line_number, f"неизвестный ключ {key!r}")

    return TriMesh(np.array(vertices, dtype=np.float64).reshape(-1, 3),
                   np.array(faces, dtype=np.int64).reshape(-1, 3))
