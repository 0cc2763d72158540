package com.example.shop;

import org.junit.Test;
import static org.junit.Assert.*;

public class CartBasicTest {

    @Test
    public void addsItems() {
        Cart cart = new Cart(new PriceCalculator(0.2));
        cart.addItem("apple", 2);
        assertFalse(cart.isEmpty());
        double total = cart.total(1.5);
        assertEquals(3.0, total, 0.001);
    }
}
