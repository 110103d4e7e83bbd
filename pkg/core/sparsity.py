# core/sparsity.py
"""
Esparsidad correlativa: grafo de co-ocurrencia de variables, extensión
cordal por grado mínimo, cliques maximales ordenadas con la propiedad de
intersección (RIP) y asignación de restricciones a cliques.

Los vértices son índices del espacio conjunto (x en 0..n-1, y en n..n+p-1).
"""

import logging
from collections import deque
from dataclasses import dataclass, field
from itertools import combinations
from math import comb

import networkx as nx

from .exceptions import ErrorRip

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CliqueDecomposition:
    cliques: tuple                  # tuplas ordenadas de vértices, en orden RIP
    parents: tuple                  # padre en el árbol de cliques (None = raíz)
    h_assign: tuple                 # índices de h por clique
    g_assign: tuple                 # índices de g por clique
    fill_edges: tuple = ()
    h_vars: tuple = field(default=(), repr=False)
    g_vars: tuple = field(default=(), repr=False)

    @property
    def sizes(self):
        return [len(c) for c in self.cliques]

    def __len__(self):
        return len(self.cliques)


@dataclass(frozen=True)
class RipCheck:
    valid: bool
    witnesses: tuple = ()           # witnesses[s-1] = q < s tal que I_s ∩ (∪_{t<s} I_t) ⊆ I_q
    violation: int = None           # primera clique (0-based) que falla

    def __bool__(self):
        return self.valid


# === GRAFO ===

def build_csp_graph(program):
    """
    Grafo de esparsidad correlativa: arista entre dos variables que aparecen
    en una misma restricción o en un mismo monomio del objetivo.
    """
    grafo = nx.Graph()
    grafo.add_nodes_from(range(program.n + program.p))

    h_vars = tuple(forma.variables for forma in program.h)
    g_vars = tuple(forma.variables for forma in program.g)
    for variables in h_vars + g_vars:
        grafo.add_edges_from(combinations(variables, 2))
    for monomio in program.f.terms:
        grafo.add_edges_from(combinations(sorted(set(monomio)), 2))

    grafo.graph.update(n=program.n, p=program.p, h_vars=h_vars, g_vars=g_vars)
    logger.info(
        'Grafo de esparsidad: %d vértices, %d aristas', grafo.number_of_nodes(), grafo.number_of_edges()
    )
    return grafo


# === CLIQUES ===

def _eliminacion_grado_minimo(grafo):
    """Orden de eliminación por grado mínimo (desempate: menor índice)."""
    adyacencia = {v: set(grafo.neighbors(v)) for v in grafo.nodes}
    orden, relleno, candidatas = [], [], []
    while adyacencia:
        v = min(adyacencia, key=lambda u: (len(adyacencia[u]), u))
        vecinos = adyacencia.pop(v)
        candidatas.append(frozenset(vecinos | {v}))
        for a, b in combinations(sorted(vecinos), 2):
            if b not in adyacencia[a]:
                adyacencia[a].add(b)
                adyacencia[b].add(a)
                relleno.append((a, b))
        for u in vecinos:
            adyacencia[u].discard(v)
        orden.append(v)
    return orden, relleno, candidatas


def _maximales(candidatas):
    unicas = sorted(set(candidatas), key=lambda c: (-len(c), sorted(c)))
    maximales = []
    for c in unicas:
        if not any(c < m for m in maximales):
            maximales.append(c)
    return sorted((tuple(sorted(c)) for c in maximales))


def _ordenar_arbol(cliques):
    """
    Orden BFS de un árbol de expansión de peso máximo del grafo de
    intersección de cliques. Devuelve (cliques ordenadas, padres).
    """
    interseccion = nx.Graph()
    interseccion.add_nodes_from(range(len(cliques)))
    conjuntos = [set(c) for c in cliques]
    for i, j in combinations(range(len(cliques)), 2):
        peso = len(conjuntos[i] & conjuntos[j])
        if peso:
            interseccion.add_edge(i, j, weight=peso)
    arbol = nx.maximum_spanning_tree(interseccion, weight='weight')

    visitados = set()
    orden, padres_originales = [], []
    for raiz in range(len(cliques)):
        if raiz in visitados:
            continue
        visitados.add(raiz)
        cola = deque([(raiz, None)])
        while cola:
            actual, padre = cola.popleft()
            orden.append(actual)
            padres_originales.append(padre)
            for vecino in sorted(arbol.neighbors(actual)):
                if vecino not in visitados:
                    visitados.add(vecino)
                    cola.append((vecino, actual))

    nueva_posicion = {original: k for k, original in enumerate(orden)}
    padres = tuple(None if p is None else nueva_posicion[p] for p in padres_originales)
    return tuple(cliques[i] for i in orden), padres


def _asignar(cliques, variables_por_fila):
    conjuntos = [set(c) for c in cliques]
    asignacion = [[] for _ in cliques]
    for fila, variables in enumerate(variables_por_fila):
        destino = next((s for s, c in enumerate(conjuntos) if set(variables) <= c), None)
        if destino is None:
            raise ErrorRip(f'la restricción {fila} no cabe en ninguna clique')
        asignacion[destino].append(fila)
    return tuple(tuple(a) for a in asignacion)


def _armar(cliques, padres, relleno, h_vars, g_vars):
    return CliqueDecomposition(
        cliques=tuple(cliques),
        parents=tuple(padres),
        h_assign=_asignar(cliques, h_vars),
        g_assign=_asignar(cliques, g_vars),
        fill_edges=tuple(relleno),
        h_vars=h_vars,
        g_vars=g_vars,
    )


def chordal_cliques(graph):
    """
    Descomposición en cliques de la extensión cordal (grado mínimo), en el
    orden de recorrido del árbol de cliques; verifica RIP antes de devolver.
    """
    _, relleno, candidatas = _eliminacion_grado_minimo(graph)
    cliques, padres = _ordenar_arbol(_maximales(candidatas))
    descomposicion = _armar(
        cliques, padres, relleno, graph.graph.get('h_vars', ()), graph.graph.get('g_vars', ()),
    )

    chequeo = verify_rip(descomposicion)
    if not chequeo:
        raise ErrorRip(f'RIP violada en la clique {chequeo.violation}')

    logger.info(
        'Cliques: %d (máx. %d, relleno %d aristas)',
        len(cliques), max(len(c) for c in cliques), len(relleno),
    )
    return descomposicion


def single_clique(graph):
    """Descomposición trivial (modo denso): una clique con todos los vértices."""
    todos = tuple(sorted(graph.nodes))
    return _armar([todos], [None], [], graph.graph.get('h_vars', ()), graph.graph.get('g_vars', ()))


def verify_rip(decomposition):
    """
    Comprueba I_s ∩ (∪_{t<s} I_t) ⊆ I_q para algún q < s, para cada s >= 1.

    Acepta una CliqueDecomposition o una secuencia de cliques.
    """
    cliques = decomposition.cliques if isinstance(decomposition, CliqueDecomposition) else decomposition
    padres = decomposition.parents if isinstance(decomposition, CliqueDecomposition) else None
    conjuntos = [set(c) for c in cliques]
    union = set(conjuntos[0]) if conjuntos else set()
    testigos = []
    for s in range(1, len(conjuntos)):
        interseccion = conjuntos[s] & union
        preferido = padres[s] if padres else None
        candidatos = ([preferido] if preferido is not None and preferido < s else []) + list(range(s))
        testigo = next((q for q in candidatos if interseccion <= conjuntos[q]), None)
        if testigo is None:
            return RipCheck(valid=False, witnesses=tuple(testigos), violation=s)
        testigos.append(testigo)
        union |= conjuntos[s]
    return RipCheck(valid=True, witnesses=tuple(testigos))


def merge_small_cliques(decomposition, threshold):
    """
    Fusiona cada clique con su padre en el árbol mientras la unión tenga a lo
    sumo `threshold` vértices. Recorre de las hojas hacia la raíz.
    """
    if threshold < 1:
        raise ErrorRip(f'umbral de fusión inválido: {threshold}')

    conjuntos = [set(c) for c in decomposition.cliques]
    padres = list(decomposition.parents)
    activa = [True] * len(conjuntos)

    for s in range(len(conjuntos) - 1, 0, -1):
        padre = padres[s]
        if padre is None or len(conjuntos[s] | conjuntos[padre]) > threshold:
            continue
        conjuntos[padre] |= conjuntos[s]
        activa[s] = False
        for t in range(len(padres)):
            if padres[t] == s:
                padres[t] = padre

    sobrevivientes = [s for s in range(len(conjuntos)) if activa[s]]
    if len(sobrevivientes) == len(conjuntos):
        return decomposition
    nueva = {s: k for k, s in enumerate(sobrevivientes)}
    cliques = [tuple(sorted(conjuntos[s])) for s in sobrevivientes]
    nuevos_padres = [None if padres[s] is None else nueva[padres[s]] for s in sobrevivientes]

    fusionada = _armar(
        cliques, nuevos_padres, decomposition.fill_edges, decomposition.h_vars, decomposition.g_vars,
    )
    chequeo = verify_rip(fusionada)
    if not chequeo:
        raise ErrorRip(f'RIP violada tras la fusión en la clique {chequeo.violation}')
    logger.info('Fusión (umbral %d): %d -> %d cliques', threshold, len(conjuntos), len(cliques))
    return fusionada


def chordal_extension(graph, decomposition):
    extendido = graph.copy()
    extendido.add_edges_from(decomposition.fill_edges)
    return extendido


def is_perfect_elimination_ordering(graph, order):
    """Cada vértice forma clique con sus vecinos posteriores en `order`."""
    posicion = {v: i for i, v in enumerate(order)}
    for v in order:
        posteriores = [u for u in graph.neighbors(v) if posicion[u] > posicion[v]]
        for a, b in combinations(posteriores, 2):
            if not graph.has_edge(a, b):
                return False
    return True


def elimination_order(graph):
    orden, _, _ = _eliminacion_grado_minimo(graph)
    return orden


# === DIAGNÓSTICO ===

def block_size(clique_size, k):
    """Dimensión de la matriz de momentos de orden k sobre una clique."""
    return comb(clique_size + k, k)


def decomposition_to_json(decomposition, names=None, k=1):
    def etiqueta(v):
        return names[v] if names else v

    return {
        'n_cliques': len(decomposition.cliques),
        'fill_in': len(decomposition.fill_edges),
        'cliques': [
            {
                'index': s,
                'parent': decomposition.parents[s],
                'size': len(c),
                'block_size': block_size(len(c), k),
                'variables': [etiqueta(v) for v in c],
                'n_h': len(decomposition.h_assign[s]) if decomposition.h_assign else 0,
                'n_g': len(decomposition.g_assign[s]) if decomposition.g_assign else 0,
            }
            for s, c in enumerate(decomposition.cliques)
        ],
    }
