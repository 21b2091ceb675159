"""
Module has the decorator that fans independent jobs out over a thread pool
"""
import concurrent.futures
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Union

InputSequence = Sequence


def iter_threaded(threads: int, ignore_types: Optional[Iterable[Union[type, None]]] = None,
                  ordered: bool = True, **kwargs: InputSequence):
    """ Fan a function out over a thread pool, one call per position of the keyword sequences

    Campaign runs, grid points, landscape profiles and bootstrap samples all go through here.
    Each keyword argument given to the decorator is a Sequence whose i-th item is passed to the
    i-th call; arguments given at call time are shared by every call. All sequences must have the
    same length.

    Idle threads pull the next pending call from the shared queue, so long jobs do not hold back
    short ones. With one thread the calls run in the caller's thread.

    :param threads: Number of threads to launch to complete task list
    :param ignore_types: Result and exception types dropped from the output (None stands for NoneType)
    :param ordered: Yield results in input order (True) or as soon as each call finishes (False)
    :param kwargs: Per-call argument sequences
    :raises: TypeError for non-positive thread count, AttributeError for improperly formatted input data
    :return: Generator over results from each parallelized function call
    """
    if not isinstance(threads, int) or threads <= 0:
        raise TypeError("Must pass positive thread value")
    # Validate input dict when code is read in
    _validate_input_dict(kwargs)
    if ignore_types is not None:
        ignore_types = {_type
                        if isinstance(_type, type) else type(_type)
                        for _type in ignore_types}
    else:
        ignore_types = set()

    def decorator(func: Callable):
        def fxn(*args, **kws):
            fxn_call_list = _build_call_list(kwargs, kws)
            if threads == 1:
                for arg_combo in fxn_call_list:
                    try:
                        result = func(*args, **arg_combo)
                    # pylint: disable=broad-except
                    except Exception as err:
                        if type(err) in ignore_types:
                            continue
                        raise
                    if type(result) not in ignore_types:
                        yield result
                return
            with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as executor:
                output_data_futures = [executor.submit(func, *args, **arg_combo) for arg_combo in fxn_call_list]
                if ordered:
                    futures_iter = iter(output_data_futures)
                else:
                    futures_iter = concurrent.futures.as_completed(output_data_futures)
                try:
                    for output in futures_iter:
                        # Goal is to catch all broad exceptions
                        try:
                            result = output.result()
                        # pylint: disable=broad-except
                        except Exception as err:
                            if type(err) in ignore_types:
                                continue
                            raise
                        if type(result) in ignore_types:
                            continue
                        yield result
                finally:
                    for pending in output_data_futures:
                        pending.cancel()

        return fxn

    return decorator


def _validate_input_dict(input_dict: Dict[str, InputSequence]):
    """ Check dict of input passed at decorator level. Confirm that the length of each input is the same

    :param input_dict: Input data to pass to functions
    :raises: AttributeError if improperly formatted data
    """
    input_ids = tuple(input_dict.keys())
    if not input_ids:
        return
    _len = len(input_dict[input_ids[0]])
    for key in input_ids[1:]:
        if len(input_dict[key]) != _len:
            raise AttributeError("Input data sizes are not identical")


def _build_call_list(input_dict: Dict[str, InputSequence], kwargs: Dict[str, object]) -> List[Dict[str, object]]:
    """ Iterate over passed args to generate function call list, one call per input position

    :param input_dict: Reference to passed data
    :param kwargs: **kwargs
    :return: Function args calls as list
    """
    if not input_dict:
        return [{**kwargs}]
    n_calls = len(next(iter(input_dict.values())))
    fxn_call_list = []
    for pos in range(n_calls):
        arg_combo = {**kwargs}
        for key, values in input_dict.items():
            arg_combo[key] = values[pos]
        fxn_call_list.append(arg_combo)
    return fxn_call_list
